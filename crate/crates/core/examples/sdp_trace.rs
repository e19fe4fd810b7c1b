//! Residual trace for one hard producibility solve, to tune the solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triadbell::conic::{self, Settings};
use triadbell::qstate::{ghz_behavior, MeasurementSet};
use triadbell::sdp::assemble;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let skip: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0);
    let k: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(3);
    let max_iters: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10_000);
    let alpha: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1.6);
    let rho: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let mem: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(8);
    let adaptive: bool = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(true);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..skip {
        MeasurementSet::random_triads(n, &mut rng);
    }
    let ms = MeasurementSet::random_triads(n, &mut rng);
    let p = ghz_behavior(&ms, 1.0);
    let (problem, _) = assemble(&p, k).unwrap();
    let settings = Settings {
        trace: true,
        max_iters,
        alpha,
        rho,
        accel_memory: mem,
        adaptive_rho: adaptive,
        ..Settings::default()
    };
    let t0 = std::time::Instant::now();
    let sol = conic::solve(&problem, &settings, None).unwrap();
    println!(
        "v*={:.8} status={:?} iters={} in {:?}",
        sol.x[0],
        sol.status,
        sol.iters,
        t0.elapsed()
    );
}
