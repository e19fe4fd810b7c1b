//! Relabeling orbits of inequality coefficient vectors and maximization
//! over input liftings.
//!
//! Relabelings act on correlator coordinates as signed permutations: setting
//! swaps and party permutations permute coordinates, outcome flips negate
//! the coordinates whose term involves the flipped (party, setting). The
//! orbit of a coefficient vector is closed under the generator set and
//! deduplicated exactly (bit patterns — all operations preserve the
//! coefficient magnitudes), so maximizing an inequality over relabelings of
//! a behavior reduces to dot products against the orbit rows.

use std::collections::HashSet;

use crate::behavior::{enumerate_selections, Behavior, Scenario};

use super::{Inequality, IneqError};

/// One signed-permutation image of the coefficient vector, sparse over
/// correlator codes.
type Row = Vec<(u32, f64)>;

/// Deduplicated orbit of an inequality's coefficient vector under the
/// relabeling group of its (n,2,2) scenario.
#[derive(Debug, Clone)]
pub struct Orbit {
    scenario: Scenario,
    rows: Vec<Row>,
}

impl Orbit {
    /// Breadth-first closure of the coefficient vector under per-party
    /// outcome flips, per-party setting swaps, and (optionally) adjacent
    /// party transpositions. Party permutations are skipped for expressions
    /// symmetric under party exchange (the caller's responsibility to know,
    /// e.g. MABK).
    pub fn new(ineq: &Inequality, use_party_perms: bool) -> Self {
        let scenario = ineq.scenario();
        let n = scenario.parties();
        let pow3: Vec<u32> = (0..n).map(|i| 3u32.pow((n - 1 - i) as u32)).collect();
        let row0: Row = ineq
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(code, &w)| (code as u32, w))
            .collect();

        let mut seen: HashSet<Vec<(u32, u64)>> = HashSet::new();
        seen.insert(key(&row0));
        let mut rows = vec![row0];
        let mut frontier = vec![0usize];
        while let Some(idx) = frontier.pop() {
            let mut images: Vec<Row> = Vec::new();
            for party in 0..n {
                for setting in 0..2u8 {
                    images.push(apply_flip(&rows[idx], party, setting, &pow3));
                }
                images.push(apply_swap(&rows[idx], party, &pow3));
            }
            if use_party_perms {
                for party in 0..n.saturating_sub(1) {
                    images.push(apply_transposition(&rows[idx], party, &pow3));
                }
            }
            for img in images {
                if seen.insert(key(&img)) {
                    rows.push(img);
                    frontier.push(rows.len() - 1);
                }
            }
        }
        Self { scenario, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Orbit rows as sparse (correlator code, coefficient) slices.
    pub fn iter_rows(&self) -> impl Iterator<Item = &[(u32, f64)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    /// Maximum of all orbit rows against a correlator-coordinate vector of
    /// the (n,2,2) scenario.
    pub fn max_on_coords(&self, coords: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.scenario.corr_len());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * coords[c as usize]).sum())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum over all relabelings of a behavior in the inequality's own
    /// two-setting scenario.
    pub fn max_on_behavior(&self, p: &Behavior) -> Result<f64, IneqError> {
        if p.scenario() != self.scenario {
            return Err(IneqError::ScenarioMismatch {
                ineq: self.scenario,
                behavior: p.scenario(),
            });
        }
        Ok(self.max_on_coords(&p.corr_coords()))
    }

    /// Whether any input lifting and relabeling exceeds `threshold`;
    /// short-circuits on the first hit, so deciding a violation is much
    /// cheaper than computing the full maximum when violations are common.
    pub fn any_above(&self, p: &Behavior, threshold: f64) -> Result<bool, IneqError> {
        if p.scenario().parties() != self.scenario.parties() {
            return Err(IneqError::ScenarioMismatch {
                ineq: self.scenario,
                behavior: p.scenario(),
            });
        }
        let subs = gather_sub_coords(p)?;
        Ok(subs.iter().any(|coords| {
            self.rows.iter().any(|row| {
                row.iter()
                    .map(|&(c, w)| w * coords[c as usize])
                    .sum::<f64>()
                    > threshold
            })
        }))
    }

    /// Maximum over all 3^n input liftings and all relabelings of a
    /// three-setting behavior.
    pub fn orbit_max(&self, p: &Behavior) -> Result<f64, IneqError> {
        let subs = gather_sub_coords(p)?;
        if p.scenario().parties() != self.scenario.parties() {
            return Err(IneqError::ScenarioMismatch {
                ineq: self.scenario,
                behavior: p.scenario(),
            });
        }
        Ok(subs
            .iter()
            .map(|coords| self.max_on_coords(coords))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

fn key(row: &Row) -> Vec<(u32, u64)> {
    row.iter().map(|&(c, w)| (c, w.to_bits())).collect()
}

fn digit(code: u32, party: usize, pow3: &[u32]) -> u32 {
    (code / pow3[party]) % 3
}

/// Outcome flip on (party, setting): negates coefficients whose term uses
/// that setting at that party (correlator digit = setting + 1).
fn apply_flip(row: &Row, party: usize, setting: u8, pow3: &[u32]) -> Row {
    row.iter()
        .map(|&(code, w)| {
            if digit(code, party, pow3) == setting as u32 + 1 {
                (code, -w)
            } else {
                (code, w)
            }
        })
        .collect()
}

/// Setting swap at one party: exchanges correlator digits 1 and 2.
fn apply_swap(row: &Row, party: usize, pow3: &[u32]) -> Row {
    let mut out: Row = row
        .iter()
        .map(|&(code, w)| {
            let d = digit(code, party, pow3);
            let new_code = match d {
                1 => code + pow3[party],
                2 => code - pow3[party],
                _ => code,
            };
            (new_code, w)
        })
        .collect();
    out.sort_unstable_by_key(|&(c, _)| c);
    out
}

/// Transposition of parties (party, party+1): swaps their correlator digits.
fn apply_transposition(row: &Row, party: usize, pow3: &[u32]) -> Row {
    let mut out: Row = row
        .iter()
        .map(|&(code, w)| {
            let da = digit(code, party, pow3) as i64;
            let db = digit(code, party + 1, pow3) as i64;
            let new_code = code as i64
                + (db - da) * pow3[party] as i64
                + (da - db) * pow3[party + 1] as i64;
            (new_code as u32, w)
        })
        .collect();
    out.sort_unstable_by_key(|&(c, _)| c);
    out
}

/// Correlator coordinates of every 2-of-3 sub-behavior of a three-setting
/// behavior, in [`enumerate_selections`] order, gathered directly from the
/// full coordinate vector (digit d of the sub-scenario maps to the selected
/// setting's digit of the full scenario).
pub fn gather_sub_coords(p: &Behavior) -> Result<Vec<Vec<f64>>, IneqError> {
    let sc = p.scenario();
    if sc.settings() != 3 {
        return Err(IneqError::NotThreeSetting(sc));
    }
    let n = sc.parties();
    let coords4 = p.corr_coords();
    let sub_len = 3usize.pow(n as u32);
    let pow4: Vec<usize> = (0..n).map(|i| 4usize.pow((n - 1 - i) as u32)).collect();
    let selections = enumerate_selections(sc);
    let mut out = Vec::with_capacity(selections.len());
    let mut digits = vec![0u32; n];
    for sel in &selections {
        let mut coords3 = vec![0.0; sub_len];
        digits.iter_mut().for_each(|d| *d = 0);
        let mut code4 = 0usize;
        for (code3, slot) in coords3.iter_mut().enumerate() {
            *slot = coords4[code4];
            if code3 + 1 == sub_len {
                break;
            }
            // Mixed-radix increment of the base-3 digits, updating the
            // gathered base-4 code incrementally.
            for i in (0..n).rev() {
                let (s0, s1) = sel.pairs[i];
                let map = [0usize, s0 as usize + 1, s1 as usize + 1];
                if digits[i] < 2 {
                    digits[i] += 1;
                    code4 += (map[digits[i] as usize] - map[digits[i] as usize - 1]) * pow4[i];
                    break;
                } else {
                    digits[i] = 0;
                    code4 -= (map[2] - map[0]) * pow4[i];
                }
            }
        }
        out.push(coords3);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Selection;
    use crate::ineq::{mabk, s_n};
    use crate::qstate::{ghz_behavior, MeasurementSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gathered_coords_match_sub_behavior_coords() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let p = ghz_behavior(&ms, 0.9);
        let subs = gather_sub_coords(&p).unwrap();
        let selections = enumerate_selections(p.scenario());
        assert_eq!(subs.len(), 27);
        for (sel, coords) in selections.iter().zip(&subs) {
            let direct = p.sub_behavior(sel).unwrap().corr_coords();
            for (a, b) in coords.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12, "{sel}");
            }
        }
    }

    #[test]
    fn mabk3_orbit_size_without_party_perms() {
        // Per-party group: 2 swaps x 4 flip patterns = 8; the MABK vector's
        // orbit divides 8^3 and is closed under party permutation already.
        let orbit = Orbit::new(&mabk(3).unwrap(), false);
        assert!(orbit.len() <= 512);
        let with_perms = Orbit::new(&mabk(3).unwrap(), true);
        assert_eq!(orbit.len(), with_perms.len());
    }

    #[test]
    fn orbit_max_ghz_pauli_mabk3_is_two() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        let orbit = Orbit::new(&mabk(3).unwrap(), false);
        assert!((orbit.orbit_max(&p).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_max_invariant_under_behavior_relabeling() {
        use crate::behavior::Relabeling;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let p = ghz_behavior(&ms, 1.0);
        let orbit = Orbit::new(&s_n(3).unwrap(), true);
        let base = orbit.orbit_max(&p).unwrap();
        // A relabeling with a party cycle, a 3-cycle on one party's settings
        // and scattered outcome flips.
        let g = Relabeling {
            party_perm: vec![2, 0, 1],
            setting_perms: vec![vec![1, 2, 0], vec![0, 1, 2], vec![2, 1, 0]],
            outcome_flips: vec![
                vec![true, false, true],
                vec![false, false, true],
                vec![true, true, false],
            ],
        };
        let q = p.relabel(&g).unwrap();
        assert!((orbit.orbit_max(&q).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn orbit_max_scales_with_visibility_for_correlator_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ms = MeasurementSet::random_triads(3, &mut rng);
        let p1 = ghz_behavior(&ms, 1.0);
        let pv = ghz_behavior(&ms, 0.37);
        let orbit = Orbit::new(&mabk(3).unwrap(), false);
        let m1 = orbit.orbit_max(&p1).unwrap();
        let mv = orbit.orbit_max(&pv).unwrap();
        assert!((mv - 0.37 * m1).abs() < 1e-10);
    }

    #[test]
    fn max_on_behavior_dominates_plain_evaluation() {
        let ineq = s_n(3).unwrap();
        let orbit = Orbit::new(&ineq, true);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let ms = MeasurementSet::random_triads(3, &mut rng);
            let p = ghz_behavior(&ms, 1.0);
            let sub = p.sub_behavior(&Selection::identity(3)).unwrap();
            assert!(orbit.max_on_behavior(&sub).unwrap() >= ineq.evaluate(&sub).unwrap() - 1e-12);
        }
    }

    #[test]
    fn any_above_agrees_with_orbit_max() {
        let orbit = Orbit::new(&s_n(3).unwrap(), true);
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let ms = MeasurementSet::random_triads(3, &mut rng);
            let p = ghz_behavior(&ms, 0.9);
            let max = orbit.orbit_max(&p).unwrap();
            for t in [max - 0.1, max - 1e-6, max + 1e-6, max + 0.1] {
                assert_eq!(orbit.any_above(&p, t).unwrap(), max > t);
            }
        }
    }
}
