//! Rough per-solve timings for the producibility relaxations on
//! random-triad GHZ behaviors. Run with --release.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triadbell::qstate::{ghz_behavior, MeasurementSet};
use triadbell::sdp::{sdp_visibility, solve_producibility};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    println!("(3,3,2) native k=2, cold:");
    for i in 0..5 {
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let p = ghz_behavior(&ms, 1.0);
        let t0 = std::time::Instant::now();
        let res = sdp_visibility(&p, 2).unwrap();
        println!(
            "  #{i}: v*={:.6} status={:?} iters={} gap={:.2e} dual={:?} in {:?}",
            res.v_star,
            res.status,
            res.iters,
            res.gap,
            res.dual_check,
            t0.elapsed()
        );
    }

    println!("(3,3,2) native k=2, warm chain:");
    let mut warm = None;
    for i in 0..5 {
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let p = ghz_behavior(&ms, 1.0);
        let t0 = std::time::Instant::now();
        let (res, sol) = solve_producibility(&p, 2, warm.as_ref()).unwrap();
        warm = Some(sol);
        println!(
            "  #{i}: v*={:.6} status={:?} iters={} in {:?}",
            res.v_star,
            res.status,
            res.iters,
            t0.elapsed()
        );
    }

    println!("(4,3,2) native k=3, cold then warm chain:");
    let mut warm = None;
    for i in 0..3 {
        let ms = MeasurementSet::random_triads(4, &mut rng);
        let p = ghz_behavior(&ms, 1.0);
        let t0 = std::time::Instant::now();
        let (res, sol) = solve_producibility(&p, 3, warm.as_ref()).unwrap();
        warm = Some(sol);
        println!(
            "  #{i}: v*={:.6} status={:?} iters={} gap={:.2e} dual={:?} in {:?}",
            res.v_star,
            res.status,
            res.iters,
            res.gap,
            res.dual_check,
            t0.elapsed()
        );
    }
}
