//! The MABK inequality family and its fast lifted-orbit maximization.
//!
//! MABK is a full-correlator expression whose coefficients depend only on
//! the settings sum x = Σxᵢ:
//!   β(x⃗) = 2^((1−n)/2)·cos[π/4·(1+n−2x)] = 2^((1−n)/2)·Re[φ·∏ᵢ(−i)^{xᵢ}]
//! with φ = e^{iπ(1+n)/4}. The factorized form powers the fast path: every
//! lifted relabeling replaces party i's weight (−i)^{xᵢ} by a complex
//! 2-of-3-settings weight vector, so the orbit maximum is a maximum of
//! multilinear contractions instead of an explicit orbit scan.

use num_complex::Complex64;

use crate::behavior::Behavior;

use super::{BoundLedger, Inequality, IneqError, Term};

type C = Complex64;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// The n-party MABK expression with local bound 1 and its quantum
/// k-producible bound ledger (2 ≤ n ≤ 8).
pub fn mabk(n: usize) -> Result<Inequality, IneqError> {
    if !(2..=8).contains(&n) {
        return Err(IneqError::PartyRange {
            family: "MABK",
            n,
            lo: 2,
            hi: 8,
        });
    }
    let scale = 2f64.powf((1.0 - n as f64) / 2.0);
    let mut terms = Vec::new();
    let mut settings = vec![0u8; n];
    for x_code in 0..(1usize << n) {
        let mut x_sum = 0i32;
        for (i, s) in settings.iter_mut().enumerate() {
            *s = ((x_code >> (n - 1 - i)) & 1) as u8;
            x_sum += *s as i32;
        }
        let angle = std::f64::consts::FRAC_PI_4 * (1 + n as i32 - 2 * x_sum) as f64;
        let beta = scale * angle.cos();
        // cos hits exact zeros only up to rounding; snap to the grid.
        let beta = if beta.abs() < 1e-12 { 0.0 } else { beta };
        if beta != 0.0 {
            terms.push(Term::full(beta, &settings));
        }
    }
    let ledger = BoundLedger::new(&mabk_bounds(n))?;
    Inequality::from_terms(
        crate::behavior::Scenario::new(n, 2)?,
        format!("M{n}"),
        terms,
        ledger,
    )
}

/// Quantum k-producible bounds of MABK: local bound 1, two-producible √2,
/// and for k ≥ 3 the tabulated values (k = n is the maximal quantum value
/// 2^((n−1)/2)).
fn mabk_bounds(n: usize) -> Vec<(usize, f64)> {
    let tail: &[f64] = match n {
        2 => &[],
        3 => &[2.0],
        4 => &[2.0, 2.0 * SQRT2],
        5 => &[2.0, 2.0 * SQRT2, 4.0],
        6 => &[2.0 * SQRT2, 2.0 * SQRT2, 4.0, 4.0 * SQRT2],
        7 => &[2.0 * SQRT2, 4.0, 4.0, 4.0 * SQRT2, 8.0],
        8 => &[
            2.0 * SQRT2,
            4.0 * SQRT2,
            4.0 * SQRT2,
            4.0 * SQRT2,
            8.0,
            8.0 * SQRT2,
        ],
        _ => unreachable!("mabk() checks the range"),
    };
    let mut bounds = vec![(1, 1.0), (2, SQRT2)];
    bounds.extend(tail.iter().enumerate().map(|(i, &b)| (i + 3, b)));
    bounds
}

/// Maximum of MABK over all input liftings and relabelings of a
/// three-setting behavior; equals `orbit_max(mabk(n), P, _)` exactly.
///
/// Per party, the combined choice of a setting pair, a setting swap, and
/// two outcome flips turns the weight (−i)^{xᵢ} into one of 24 vectors
/// ±i^m·(e_s − i·e_t) / conjugate over the three settings. The phases i^m
/// factor out of the multilinear contraction Z, leaving 6 base choices per
/// party and a final max over the four global phases:
/// max_m Re[i^m·φ·Z] = max(|Re(φZ)|, |Im(φZ)|). Party permutations add
/// nothing because β is symmetric in the parties.
pub fn mabk_orbit_max_fast(p: &Behavior) -> Result<f64, IneqError> {
    let sc = p.scenario();
    if sc.settings() != 3 {
        return Err(IneqError::NotThreeSetting(sc));
    }
    let n = sc.parties();
    let tensor = full_corr_tensor(p);
    // One scratch tensor per contraction depth: levels[d] has 3^(n-d)
    // entries, the partial contraction over the first d parties.
    let mut levels: Vec<Vec<C>> = (0..=n)
        .map(|d| vec![C::new(0.0, 0.0); 3usize.pow((n - d) as u32)])
        .collect();
    levels[0] = tensor.iter().map(|&t| C::new(t, 0.0)).collect();
    let phi = C::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (1 + n as i32) as f64);
    let mut best = f64::NEG_INFINITY;
    contract(&mut levels, 0, phi, &mut best);
    Ok(best * 2f64.powf((1.0 - n as f64) / 2.0))
}

fn contract(levels: &mut [Vec<C>], depth: usize, phi: C, best: &mut f64) {
    let len = levels[depth].len();
    if len == 1 {
        let w = phi * levels[depth][0];
        *best = best.max(w.re.abs()).max(w.im.abs());
        return;
    }
    let third = len / 3;
    for (s0, s1) in [(0usize, 1usize), (0, 2), (1, 2)] {
        for iu in [C::new(0.0, -1.0), C::new(0.0, 1.0)] {
            {
                let (head, tail) = levels.split_at_mut(depth + 1);
                let src = &head[depth];
                let dst = &mut tail[0];
                for j in 0..third {
                    dst[j] = src[s0 * third + j] + iu * src[s1 * third + j];
                }
            }
            contract(levels, depth + 1, phi, best);
        }
    }
}

/// Full-correlator tensor E(y⃗), y ∈ {0,1,2}^n, gathered from the behavior's
/// correlator coordinates (digit yᵢ+1 per party).
fn full_corr_tensor(p: &Behavior) -> Vec<f64> {
    let sc = p.scenario();
    let n = sc.parties();
    let coords = p.corr_coords();
    let len = 3usize.pow(n as u32);
    let mut out = vec![0.0; len];
    let mut digits = vec![1u32; n];
    // code4 for digits (1,1,...,1).
    let pow4: Vec<usize> = (0..n).map(|i| 4usize.pow((n - 1 - i) as u32)).collect();
    let mut code4: usize = pow4.iter().sum();
    for (code3, slot) in out.iter_mut().enumerate() {
        *slot = coords[code4];
        if code3 + 1 == len {
            break;
        }
        for i in (0..n).rev() {
            if digits[i] < 3 {
                digits[i] += 1;
                code4 += pow4[i];
                break;
            } else {
                digits[i] = 1;
                code4 -= 2 * pow4[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ineq::Orbit;
    use crate::qstate::{ghz_behavior, MeasurementSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coeff_of(ineq: &Inequality, settings: &[u8]) -> f64 {
        let digits: Vec<u8> = settings.iter().map(|&s| s + 1).collect();
        ineq.coeffs()[ineq.scenario().corr_code(&digits)]
    }

    #[test]
    fn mabk2_coefficients() {
        let m = mabk(2).unwrap();
        assert!((coeff_of(&m, &[0, 0]) + 0.5).abs() < 1e-15);
        assert!((coeff_of(&m, &[0, 1]) - 0.5).abs() < 1e-15);
        assert!((coeff_of(&m, &[1, 0]) - 0.5).abs() < 1e-15);
        assert!((coeff_of(&m, &[1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mabk3_coefficients() {
        let m = mabk(3).unwrap();
        assert!((coeff_of(&m, &[0, 0, 0]) + 0.5).abs() < 1e-15);
        for s in [[0, 1, 1], [1, 0, 1], [1, 1, 0]] {
            assert!((coeff_of(&m, &s) - 0.5).abs() < 1e-15);
        }
        for s in [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]] {
            assert_eq!(coeff_of(&m, &s), 0.0);
        }
    }

    #[test]
    fn mabk_bound_ledger_spot_values() {
        let m3 = mabk(3).unwrap();
        assert_eq!(m3.bounds().bound(1), Some(1.0));
        assert_eq!(m3.bounds().bound(2), Some(SQRT2));
        assert_eq!(m3.bounds().bound(3), Some(2.0));
        let m6 = mabk(6).unwrap();
        assert_eq!(m6.bounds().bound(3), Some(2.0 * SQRT2));
        assert_eq!(m6.bounds().bound(6), Some(4.0 * SQRT2));
    }

    #[test]
    fn mabk3_raw_value_on_pauli_xy_selection() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        let sub = p
            .sub_behavior(&crate::behavior::Selection::identity(3))
            .unwrap();
        let value = mabk(3).unwrap().evaluate(&sub).unwrap();
        assert!((value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn fast_path_ghz_pauli_is_two() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        assert!((mabk_orbit_max_fast(&p).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fast_path_matches_orbit_enumeration() {
        for n in [3usize, 4] {
            let orbit = Orbit::new(&mabk(n).unwrap(), false);
            let mut rng = ChaCha8Rng::seed_from_u64(31 + n as u64);
            for _ in 0..20 {
                let ms = MeasurementSet::random_triads(n, &mut rng);
                let p = ghz_behavior(&ms, 1.0);
                let fast = mabk_orbit_max_fast(&p).unwrap();
                let brute = orbit.orbit_max(&p).unwrap();
                assert!(
                    (fast - brute).abs() < 1e-9,
                    "n={n}: fast {fast} vs brute {brute}"
                );
            }
        }
    }

    #[test]
    fn fast_path_scales_with_visibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let ms = MeasurementSet::random_triads(5, &mut rng);
        let full = mabk_orbit_max_fast(&ghz_behavior(&ms, 1.0)).unwrap();
        let dim = mabk_orbit_max_fast(&ghz_behavior(&ms, 0.55)).unwrap();
        assert!((dim - 0.55 * full).abs() < 1e-10);
    }

    #[test]
    fn white_noise_value_is_zero() {
        let m = mabk(3).unwrap();
        let w = crate::behavior::Behavior::white_noise(m.scenario());
        assert!(m.evaluate(&w).unwrap().abs() < 1e-14);
        assert_eq!(m.noise_value(), 0.0);
    }
}
