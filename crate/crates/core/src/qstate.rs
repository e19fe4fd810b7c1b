//! GHZ-state measurement statistics for random qubit observables.
//!
//! Each party measures one of three observables that form a measurement
//! triad: a Haar-random rotation of the Pauli frame (X, Y, Z). Any two
//! eigenbases of a triad are mutually unbiased. The n-party behavior of a
//! GHZ state mixed with white noise is assembled from a closed form in the
//! per-party observable matrix elements, avoiding the 2^n-dimensional state
//! vector entirely.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::behavior::{Behavior, Scenario};

type C = Complex64;

/// A single-qubit observable with eigenvalues ±1, stored as a 2×2 complex
/// Hermitian matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observable(pub [[C; 2]; 2]);

impl Observable {
    pub const fn pauli_x() -> Self {
        Self([
            [C::new(0.0, 0.0), C::new(1.0, 0.0)],
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
        ])
    }

    pub const fn pauli_y() -> Self {
        Self([
            [C::new(0.0, 0.0), C::new(0.0, -1.0)],
            [C::new(0.0, 1.0), C::new(0.0, 0.0)],
        ])
    }

    pub const fn pauli_z() -> Self {
        Self([
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
            [C::new(0.0, 0.0), C::new(-1.0, 0.0)],
        ])
    }

    /// Conjugation U·O·U† by a 2×2 unitary.
    pub fn conjugate(&self, u: &Unitary2) -> Self {
        let mut uo = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    uo[i][j] += u.0[i][k] * self.0[k][j];
                }
            }
        }
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    out[i][j] += uo[i][k] * u.0[j][k].conj();
                }
            }
        }
        Self(out)
    }

    /// Projector (I + (−1)^a O)/2 onto the outcome-`a` eigenspace.
    pub fn projector(&self, outcome: u8) -> [[C; 2]; 2] {
        let s = if outcome == 0 { 1.0 } else { -1.0 };
        let mut p = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                p[i][j] = (C::new(id, 0.0) + self.0[i][j] * s) * 0.5;
            }
        }
        p
    }
}

/// A 2×2 unitary, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(pub [[C; 2]; 2]);

impl Unitary2 {
    /// Haar-distributed unitary from a complex Ginibre matrix via QR with
    /// the phase convention R_jj > 0 (Q absorbs diag(R_jj/|R_jj|)).
    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut g = [[C::new(0.0, 0.0); 2]; 2];
        for row in &mut g {
            for z in row.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = C::new(re, im);
            }
        }
        // Gram–Schmidt on the two columns.
        let n0 = (g[0][0].norm_sqr() + g[1][0].norm_sqr()).sqrt();
        let q0 = [g[0][0] / n0, g[1][0] / n0];
        let r01 = q0[0].conj() * g[0][1] + q0[1].conj() * g[1][1];
        let v1 = [g[0][1] - q0[0] * r01, g[1][1] - q0[1] * r01];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let q1 = [v1[0] / n1, v1[1] / n1];
        // R_00 = n0 > 0 and R_11 = n1 > 0 already, so no extra phase fix is
        // needed beyond normalizing with the positive norms above.
        Self([[q0[0], q1[0]], [q0[1], q1[1]]])
    }
}

/// Three jointly rotated Pauli observables (U X U†, U Y U†, U Z U†): any two
/// of the three eigenbases are mutually unbiased.
#[derive(Debug, Clone, Copy)]
pub struct Triad(pub [Observable; 3]);

impl Triad {
    pub fn from_unitary(u: &Unitary2) -> Self {
        Self([
            Observable::pauli_x().conjugate(u),
            Observable::pauli_y().conjugate(u),
            Observable::pauli_z().conjugate(u),
        ])
    }

    pub fn haar<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::from_unitary(&Unitary2::haar(rng))
    }

    /// The untouched Pauli frame (X, Y, Z).
    pub fn pauli() -> Self {
        Self([
            Observable::pauli_x(),
            Observable::pauli_y(),
            Observable::pauli_z(),
        ])
    }
}

/// Per-party local measurements: `triads[i][x]` is party i's observable for
/// setting x. Holds 2 or 3 observables per party.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub observables: Vec<Vec<Observable>>,
}

impl MeasurementSet {
    /// One independent Haar-random triad per party.
    pub fn random_triads<R: Rng + ?Sized>(parties: usize, rng: &mut R) -> Self {
        Self {
            observables: (0..parties).map(|_| Triad::haar(rng).0.to_vec()).collect(),
        }
    }

    /// Every party measures the plain Pauli triad.
    pub fn pauli_triads(parties: usize) -> Self {
        Self {
            observables: (0..parties).map(|_| Triad::pauli().0.to_vec()).collect(),
        }
    }

    pub fn parties(&self) -> usize {
        self.observables.len()
    }

    pub fn settings(&self) -> usize {
        self.observables[0].len()
    }
}

/// Behavior of the n-party GHZ state (|0…0⟩+|1…1⟩)/√2 mixed with white noise
/// at visibility `v`, measured with `measurements`.
///
/// For projectors Π_i = (I+(−1)^{a_i}O_{x_i})/2 the GHZ expectation value is
///   ⟨GHZ| ⊗Π_i |GHZ⟩ = ½[∏(Π_i)₀₀ + ∏(Π_i)₁₁ + 2·Re ∏(Π_i)₀₁],
/// and white noise contributes (1−v)/2^n to every outcome.
pub fn ghz_behavior(measurements: &MeasurementSet, v: f64) -> Behavior {
    let n = measurements.parties();
    let m = measurements.settings();
    let sc = Scenario::new(n, m).expect("measurement set within supported scenarios");
    assert!((0.0..=1.0).contains(&v), "visibility outside [0,1]");
    let na = sc.outcome_blocks();
    let noise = (1.0 - v) / na as f64;
    let mut table = vec![0.0; sc.table_len()];

    // Precompute projector entries (00, 11, 01) per party, setting, outcome.
    let proj: Vec<Vec<[[C; 3]; 2]>> = measurements
        .observables
        .iter()
        .map(|obs| {
            obs.iter()
                .map(|o| {
                    let mut entry = [[C::new(0.0, 0.0); 3]; 2];
                    for a in 0..2u8 {
                        let p = o.projector(a);
                        entry[a as usize] = [p[0][0], p[1][1], p[0][1]];
                    }
                    entry
                })
                .collect()
        })
        .collect();

    let mut xs = vec![0u8; n];
    for x_code in 0..sc.setting_blocks() {
        let mut rem = x_code;
        for i in (0..n).rev() {
            xs[i] = (rem % m) as u8;
            rem /= m;
        }
        let block = x_code * na;
        for a_code in 0..na {
            let mut d00 = C::new(1.0, 0.0);
            let mut d11 = C::new(1.0, 0.0);
            let mut o01 = C::new(1.0, 0.0);
            for i in 0..n {
                let e = &proj[i][xs[i] as usize][sc.outcome_bit(a_code, i) as usize];
                d00 *= e[0];
                d11 *= e[1];
                o01 *= e[2];
            }
            let g = 0.5 * (d00.re + d11.re + 2.0 * o01.re);
            table[block + a_code] = v * g + noise;
        }
    }
    Behavior::from_table_unchecked(sc, table)
}

/// State-vector reference: builds ρ = v·|GHZ⟩⟨GHZ| + (1−v)·I/2^n explicitly
/// and evaluates every outcome probability as tr(ρ ⊗Π). Exponential in n;
/// used to validate [`ghz_behavior`].
pub fn ghz_behavior_dense(measurements: &MeasurementSet, v: f64) -> Behavior {
    let n = measurements.parties();
    let m = measurements.settings();
    let sc = Scenario::new(n, m).expect("measurement set within supported scenarios");
    let dim = 1usize << n;
    let na = sc.outcome_blocks();

    // |GHZ⟩ amplitudes.
    let mut psi = vec![C::new(0.0, 0.0); dim];
    let amp = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi[0] = amp;
    psi[dim - 1] = amp;

    let mut table = vec![0.0; sc.table_len()];
    let mut xs = vec![0u8; n];
    for x_code in 0..sc.setting_blocks() {
        let mut rem = x_code;
        for i in (0..n).rev() {
            xs[i] = (rem % m) as u8;
            rem /= m;
        }
        for a_code in 0..na {
            // φ = (⊗Π_i) ψ, applying each projector to its tensor factor.
            let mut phi = psi.clone();
            for i in 0..n {
                let p = measurements.observables[i][xs[i] as usize]
                    .projector(sc.outcome_bit(a_code, i));
                let stride = 1usize << (n - 1 - i);
                for base in 0..dim {
                    if base & stride == 0 {
                        let u = phi[base];
                        let w = phi[base | stride];
                        phi[base] = p[0][0] * u + p[0][1] * w;
                        phi[base | stride] = p[1][0] * u + p[1][1] * w;
                    }
                }
            }
            // tr(|ψ⟩⟨ψ| Π) = ⟨ψ|Π|ψ⟩ and tr(Π)/2^n for the noise part. The
            // projector product's trace is computed from per-party traces:
            // tr(⊗Π_i) = ∏ tr(Π_i) = 1 for rank-1 qubit projectors.
            let ghz_part: f64 = psi
                .iter()
                .zip(&phi)
                .map(|(a, b)| (a.conj() * b).re)
                .sum();
            table[x_code * na + a_code] = v * ghz_part + (1.0 - v) / na as f64;
        }
    }
    Behavior::from_table(sc, table).expect("dense reference produces a valid behavior")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat_mul(a: &[[C; 2]; 2], b: &[[C; 2]; 2]) -> [[C; 2]; 2] {
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = Unitary2::haar(&mut rng);
            let mut udag = [[C::new(0.0, 0.0); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    udag[i][j] = u.0[j][i].conj();
                }
            }
            let prod = mat_mul(&u.0, &udag);
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[i][j] - C::new(want, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn haar_first_moment_vanishes() {
        // E[U] = 0 for Haar measure; the empirical mean of U_00 over many
        // draws must shrink like 1/sqrt(N).
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 40_000;
        let mut mean = C::new(0.0, 0.0);
        for _ in 0..trials {
            mean += Unitary2::haar(&mut rng).0[0][0];
        }
        mean /= trials as f64;
        assert!(mean.norm() < 0.02, "E[U_00] = {mean}");
    }

    #[test]
    fn haar_second_moment_matches_exact_value() {
        // E[|U_00|^2] = 1/2 for Haar-random 2x2 unitaries.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 40_000;
        let mut mean = 0.0;
        for _ in 0..trials {
            mean += Unitary2::haar(&mut rng).0[0][0].norm_sqr();
        }
        mean /= trials as f64;
        assert!((mean - 0.5).abs() < 0.01, "E[|U_00|^2] = {mean}");
    }

    #[test]
    fn triad_bases_are_mutually_unbiased() {
        // Transition probability between eigenstates of different triad
        // members is exactly 1/2: tr(Π_a^(s) Π_b^(t)) = 1/2 for s ≠ t.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let t = Triad::haar(&mut rng);
            for s in 0..3 {
                for u in 0..3 {
                    if s == u {
                        continue;
                    }
                    for a in 0..2u8 {
                        for b in 0..2u8 {
                            let pa = t.0[s].projector(a);
                            let pb = t.0[u].projector(b);
                            let prod = mat_mul(&pa, &pb);
                            let tr = (prod[0][0] + prod[1][1]).re;
                            assert!((tr - 0.5).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pauli_anchor_correlators() {
        // GHZ_3 with Pauli triads: <XXX> = 1, <YYX> = -1, <ZZZ> = 0.
        let ms = MeasurementSet::pauli_triads(3);
        let b = ghz_behavior(&ms, 1.0);
        // Digits are setting+1: X=1, Y=2, Z=3.
        assert!((b.correlator(&[1, 1, 1]) - 1.0).abs() < 1e-12);
        assert!((b.correlator(&[2, 2, 1]) + 1.0).abs() < 1e-12);
        assert!(b.correlator(&[3, 3, 3]).abs() < 1e-12);
        // Single-party marginals vanish.
        assert!(b.correlator(&[1, 0, 0]).abs() < 1e-12);
        assert!(b.correlator(&[3, 0, 0]).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=5 {
            for &v in &[1.0, 0.7, 0.0] {
                let ms = MeasurementSet::random_triads(n, &mut rng);
                let fast = ghz_behavior(&ms, v);
                let dense = ghz_behavior_dense(&ms, v);
                let max_dev = fast
                    .table()
                    .iter()
                    .zip(dense.table())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(max_dev < 1e-10, "n={n} v={v}: deviation {max_dev}");
            }
        }
    }

    #[test]
    fn ghz_behavior_is_valid_at_all_visibilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &v in &[0.0, 0.3, 1.0] {
            let ms = MeasurementSet::random_triads(4, &mut rng);
            let b = ghz_behavior(&ms, v);
            // Re-validate through the checked constructor.
            assert!(Behavior::from_table(b.scenario(), b.table().to_vec()).is_ok());
        }
    }

    #[test]
    fn noise_mixes_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let pure = ghz_behavior(&ms, 1.0);
        let sc = pure.scenario();
        let v = 0.42;
        let mixed = pure.mix(&Behavior::white_noise(sc), v).unwrap();
        let direct = ghz_behavior(&ms, v);
        for (a, b) in mixed.table().iter().zip(direct.table()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
