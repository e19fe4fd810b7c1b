//! Two permutation-structured full-correlator families with known
//! k-producible bound ledgers: the uniform family Sn and the cyclic
//! family FGn.

use super::{BoundLedger, Inequality, IneqError, Term};
use crate::behavior::Scenario;

/// The n-party uniform expression
///   2^(1−n)·Σ_x⃗ E(x⃗) − E(1,…,1) ≤ 1,
/// 3 ≤ n ≤ 8. Its k-producible bounds depend only on k and are tabulated
/// up to k = min(n, 6).
pub fn s_n(n: usize) -> Result<Inequality, IneqError> {
    if !(3..=8).contains(&n) {
        return Err(IneqError::PartyRange {
            family: "Sn",
            n,
            lo: 3,
            hi: 8,
        });
    }
    let w = 2f64.powi(1 - n as i32);
    let mut terms = Vec::new();
    let mut settings = vec![0u8; n];
    for x_code in 0..(1usize << n) {
        for (i, s) in settings.iter_mut().enumerate() {
            *s = ((x_code >> (n - 1 - i)) & 1) as u8;
        }
        let coeff = if x_code == (1 << n) - 1 { w - 1.0 } else { w };
        terms.push(Term::full(coeff, &settings));
    }
    const BOUNDS: [f64; 6] = [1.0, std::f64::consts::SQRT_2, 5.0 / 3.0, 1.8428, 1.9746, 2.0777];
    let entries: Vec<(usize, f64)> = BOUNDS[..n.min(6)]
        .iter()
        .enumerate()
        .map(|(i, &b)| (i + 1, b))
        .collect();
    Inequality::from_terms(Scenario::new(n, 2)?, format!("Sn{n}"), terms, BoundLedger::new(&entries)?)
}

/// The n-party cyclic expression
///   (1/(n−1))·[E(0,1,…,1) + cyclic shifts − E(0,0,0,1,…,1)] ≤ 1,
/// 4 ≤ n ≤ 6, with tabulated k-producible bounds up to k = n.
pub fn fg_n(n: usize) -> Result<Inequality, IneqError> {
    if !(4..=6).contains(&n) {
        return Err(IneqError::PartyRange {
            family: "FG",
            n,
            lo: 4,
            hi: 6,
        });
    }
    let w = 1.0 / (n - 1) as f64;
    let mut terms = Vec::new();
    for j in 0..n {
        let settings: Vec<u8> = (0..n).map(|i| u8::from(i != j)).collect();
        terms.push(Term::full(w, &settings));
    }
    let negative: Vec<u8> = (0..n).map(|i| u8::from(i >= 3)).collect();
    terms.push(Term::full(-w, &negative));
    let entries: Vec<(usize, f64)> = std::iter::once((1, 1.0))
        .chain(
            fg_quantum_bounds(n)
                .iter()
                .enumerate()
                .map(|(i, &b)| (i + 2, b)),
        )
        .collect();
    Inequality::from_terms(Scenario::new(n, 2)?, format!("FG{n}"), terms, BoundLedger::new(&entries)?)
}

fn fg_quantum_bounds(n: usize) -> &'static [f64] {
    match n {
        4 => &[1.2247, 1.4679, 5.0 / 3.0],
        5 => &[1.1547, 1.2291, 1.3509, 1.5],
        6 => &[1.1180, 1.2195, 1.2392, 1.2807, 1.4],
        _ => unreachable!("fg_n() checks the range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeff_of(ineq: &Inequality, settings: &[u8]) -> f64 {
        let digits: Vec<u8> = settings.iter().map(|&s| s + 1).collect();
        ineq.coeffs()[ineq.scenario().corr_code(&digits)]
    }

    #[test]
    fn s3_coefficients() {
        let s = s_n(3).unwrap();
        for code in 0..7u8 {
            let settings = [(code >> 2) & 1, (code >> 1) & 1, code & 1];
            assert!((coeff_of(&s, &settings) - 0.25).abs() < 1e-15);
        }
        assert!((coeff_of(&s, &[1, 1, 1]) + 0.75).abs() < 1e-15);
    }

    #[test]
    fn s_n_ledgers() {
        let s3 = s_n(3).unwrap();
        assert_eq!(s3.bounds().bound(2), Some(std::f64::consts::SQRT_2));
        assert_eq!(s3.bounds().bound(3), Some(5.0 / 3.0));
        assert_eq!(s3.bounds().bound(4), None);
        let s8 = s_n(8).unwrap();
        assert_eq!(s8.bounds().bound(6), Some(2.0777));
        assert_eq!(s8.bounds().bound(7), None);
    }

    #[test]
    fn fg4_term_pattern() {
        let f = fg_n(4).unwrap();
        let third = 1.0 / 3.0;
        for s in [[0, 1, 1, 1], [1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0]] {
            assert!((coeff_of(&f, &s) - third).abs() < 1e-15);
        }
        assert!((coeff_of(&f, &[0, 0, 0, 1]) + third).abs() < 1e-15);
        assert_eq!(f.terms().len(), 5);
        assert_eq!(f.bounds().bound(4), Some(5.0 / 3.0));
    }

    #[test]
    fn fg5_negative_term_splits_three_and_two() {
        let f = fg_n(5).unwrap();
        assert!((coeff_of(&f, &[0, 0, 0, 1, 1]) + 0.25).abs() < 1e-15);
        assert!((coeff_of(&f, &[0, 1, 1, 1, 1]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn all_zero_strategy_reaches_s_n_local_bound() {
        // Deterministic +1 outcomes everywhere: every correlator is 1, so
        // the value is 2^(1-n)·2^n − 1 = 1.
        for n in 3..=6 {
            let s = s_n(n).unwrap();
            let total: f64 = s.coeffs().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn party_range_is_enforced() {
        assert!(s_n(2).is_err());
        assert!(s_n(9).is_err());
        assert!(fg_n(3).is_err());
        assert!(fg_n(7).is_err());
    }
}
