//! Microbenchmark: PSD projection cost by matrix side, and tracked-subspace
//! projection accuracy/speed on a slowly drifting matrix.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triadbell::conic::{svec_len, svec_pack};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for side in [27usize, 64, 256] {
        let mut mat = vec![0.0f64; side * side];
        for j in 0..side {
            for i in j..side {
                let v = rng.gen_range(-1.0..1.0);
                mat[j * side + i] = v;
                mat[i * side + j] = v;
            }
        }
        let mut packed = vec![0.0; svec_len(side)];
        svec_pack(&mat, side, &mut packed);
        let mut engine = triadbell::conic::test_engine(&[side]);
        let reps = if side > 128 { 50 } else { 400 };
        let t0 = std::time::Instant::now();
        let mut buf = packed.clone();
        for _ in 0..reps {
            buf.copy_from_slice(&packed);
            engine.project_psd(0, &mut buf, side, true);
        }
        let dt = t0.elapsed();
        println!("exact side {side}: {:?} per projection", dt / reps as u32);
    }

    // Tracked path: polarized spectrum (thin negative band), small drift
    // between calls, compared entry-by-entry against an exact engine.
    let side = 256usize;
    let raw = DMatrix::from_fn(side, side, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let mut lam: Vec<f64> = (0..side)
        .map(|i| 0.02 + (i as f64) / side as f64)
        .collect();
    for (i, l) in lam.iter_mut().take(30).enumerate() {
        *l = -0.3 * (30 - i) as f64 / 30.0;
    }
    let qm = &q * DMatrix::from_diagonal(&DVector::from_vec(lam)) * q.transpose();
    let mut mat: Vec<f64> = qm.as_slice().to_vec();
    let mut packed = vec![0.0; svec_len(side)];
    let mut fast = triadbell::conic::test_engine(&[side]);
    let mut slow = triadbell::conic::test_engine(&[side]);
    svec_pack(&mat, side, &mut packed);
    let mut buf = packed.clone();
    fast.project_psd(0, &mut buf, side, true);
    let reps = 50u32;
    let mut t_fast = std::time::Duration::ZERO;
    let mut worst = 0.0f64;
    for _ in 0..reps {
        for j in 0..side {
            for i in j..side {
                let e = 2e-5 * rng.gen_range(-1.0..1.0);
                mat[j * side + i] += e;
                mat[i * side + j] = mat[j * side + i];
            }
        }
        svec_pack(&mat, side, &mut packed);
        let mut b1 = packed.clone();
        let t0 = std::time::Instant::now();
        fast.project_psd(0, &mut b1, side, false);
        t_fast += t0.elapsed();
        let mut b2 = packed.clone();
        slow.project_psd(0, &mut b2, side, true);
        for (a, b) in b1.iter().zip(&b2) {
            worst = worst.max((a - b).abs());
        }
    }
    println!(
        "tracked side {side}: {:?} per projection, max dev vs exact {worst:.3e}",
        t_fast / reps
    );
}
