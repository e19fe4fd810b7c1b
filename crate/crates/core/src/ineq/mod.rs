//! Bell expressions with k-producible bound ledgers, their evaluation, and
//! entanglement-depth certification.
//!
//! Every inequality here lives in a two-setting scenario (n,2,2) and is
//! written in correlator form: a linear functional Σ c_T·E_T over full and
//! marginal correlators. Certification against a three-setting behavior
//! maximizes the functional over all input liftings (choices of 2 of 3
//! settings per party) and all relabelings (see [`orbit`]), then compares
//! the value against the ledger of k-producible bounds.

pub mod families;
pub mod mabk;
pub mod orbit;
pub mod sliwa;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::behavior::{Behavior, BehaviorError, Scenario};
pub use families::{fg_n, s_n};
pub use mabk::{mabk, mabk_orbit_max_fast};
pub use orbit::Orbit;
pub use sliwa::{sliwa, sliwa_catalog, SliwaError};

/// A Bell value this far above a bound counts as a violation. Separates
/// float noise from true violations at the O(1)–O(10) bound magnitudes in
/// play.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IneqError {
    #[error("inequality scenario must have two settings, got {0}")]
    NotTwoSetting(Scenario),
    #[error("party count {n} outside supported range {lo}..={hi} for {family}")]
    PartyRange {
        family: &'static str,
        n: usize,
        lo: usize,
        hi: usize,
    },
    #[error("invalid term: {0}")]
    BadTerm(String),
    #[error("bound ledger invalid: {0}")]
    BadLedger(String),
    #[error("scenario mismatch: inequality is {ineq}, behavior is {behavior}")]
    ScenarioMismatch { ineq: Scenario, behavior: Scenario },
    #[error("behavior must have three settings for lifting, got {0}")]
    NotThreeSetting(Scenario),
    #[error("no violation direction: witness value equals the white-noise value")]
    NoViolationDirection,
    #[error("certification family is empty")]
    EmptyFamily,
    #[error("catalog asset corrupt: {0}")]
    Catalog(String),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// One correlator term: a coefficient times E over a party subset with one
/// setting per participating party. An empty factor list is a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// (party, setting) pairs, strictly increasing in party.
    pub factors: Vec<(u8, u8)>,
}

impl Term {
    pub fn new(coeff: f64, mut factors: Vec<(u8, u8)>) -> Self {
        factors.sort_unstable();
        Self { coeff, factors }
    }

    /// Full-correlator term: one setting per party, party order implied.
    pub fn full(coeff: f64, settings: &[u8]) -> Self {
        Self {
            coeff,
            factors: settings
                .iter()
                .enumerate()
                .map(|(i, &s)| (i as u8, s))
                .collect(),
        }
    }

    fn corr_code(&self, scenario: Scenario) -> usize {
        let mut digits = vec![0u8; scenario.parties()];
        for &(p, s) in &self.factors {
            digits[p as usize] = s + 1;
        }
        scenario.corr_code(&digits)
    }
}

/// Map from producibility class k to the maximal value attainable by
/// behaviors of k-producible states; k = 1 is the local bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLedger {
    bounds: BTreeMap<usize, f64>,
}

impl BoundLedger {
    /// Entries must start at k = 1 and be nondecreasing in k.
    pub fn new(entries: &[(usize, f64)]) -> Result<Self, IneqError> {
        let bounds: BTreeMap<usize, f64> = entries.iter().copied().collect();
        if bounds.len() != entries.len() {
            return Err(IneqError::BadLedger("duplicate k".into()));
        }
        if !bounds.contains_key(&1) {
            return Err(IneqError::BadLedger("missing local bound (k = 1)".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (&k, &b) in &bounds {
            if k == 0 {
                return Err(IneqError::BadLedger("k = 0 entry".into()));
            }
            if b < prev - 1e-12 {
                return Err(IneqError::BadLedger(format!(
                    "bound decreases at k = {k}: {b} < {prev}"
                )));
            }
            prev = b;
        }
        Ok(Self { bounds })
    }

    pub fn bound(&self, k: usize) -> Option<f64> {
        self.bounds.get(&k).copied()
    }

    pub fn local_bound(&self) -> f64 {
        self.bounds[&1]
    }

    /// Available producibility classes in increasing order.
    pub fn ks(&self) -> impl Iterator<Item = usize> + '_ {
        self.bounds.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.bounds.iter().map(|(&k, &b)| (k, b))
    }
}

/// A Bell expression in correlator form over an (n,2,2) scenario, with its
/// bound ledger.
#[derive(Debug, Clone)]
pub struct Inequality {
    scenario: Scenario,
    name: String,
    terms: Vec<Term>,
    /// Dense coefficients over correlator coordinates, length 3^n.
    coeffs: Vec<f64>,
    bounds: BoundLedger,
}

impl Inequality {
    pub fn from_terms(
        scenario: Scenario,
        name: impl Into<String>,
        terms: Vec<Term>,
        bounds: BoundLedger,
    ) -> Result<Self, IneqError> {
        if scenario.settings() != 2 {
            return Err(IneqError::NotTwoSetting(scenario));
        }
        let mut coeffs = vec![0.0; scenario.corr_len()];
        for t in &terms {
            for w in t.factors.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(IneqError::BadTerm(format!(
                        "duplicate or unsorted party in {:?}",
                        t.factors
                    )));
                }
            }
            for &(p, s) in &t.factors {
                if p as usize >= scenario.parties() || s >= 2 {
                    return Err(IneqError::BadTerm(format!(
                        "party {p} setting {s} outside {scenario}"
                    )));
                }
            }
            coeffs[t.corr_code(scenario)] += t.coeff;
        }
        Ok(Self {
            scenario,
            name: name.into(),
            terms,
            coeffs,
            bounds,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Dense correlator-coordinate coefficients, indexed by
    /// [`Scenario::corr_code`].
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn bounds(&self) -> &BoundLedger {
        &self.bounds
    }

    /// Value of the expression on the uniform behavior: the constant
    /// coefficient, since every correlator of white noise vanishes.
    pub fn noise_value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Evaluates the linear functional on a behavior of the same scenario.
    pub fn evaluate(&self, p: &Behavior) -> Result<f64, IneqError> {
        if p.scenario() != self.scenario {
            return Err(IneqError::ScenarioMismatch {
                ineq: self.scenario,
                behavior: p.scenario(),
            });
        }
        let coords = p.corr_coords();
        Ok(dot(&self.coeffs, &coords))
    }

    /// The canonical probability-form coefficients β(a⃗|x⃗) (x⃗-major), with
    /// strict-subset correlators expanded by the setting-averaging
    /// convention: Σ β(a⃗|x⃗)·P(a⃗|x⃗) equals [`Inequality::evaluate`].
    pub fn probability_coeffs(&self) -> Vec<f64> {
        let sc = self.scenario;
        let n = sc.parties();
        let m = sc.settings();
        let na = sc.outcome_blocks();
        let mut beta = vec![0.0; sc.table_len()];
        let mut xs = vec![0u8; n];
        for x_code in 0..sc.setting_blocks() {
            let mut rem = x_code;
            for i in (0..n).rev() {
                xs[i] = (rem % m) as u8;
                rem /= m;
            }
            for t in &self.terms {
                if t.factors.iter().any(|&(p, s)| xs[p as usize] != s) {
                    continue;
                }
                let weight = t.coeff / (m as f64).powi((n - t.factors.len()) as i32);
                for a in 0..na {
                    let mut parity = 0u32;
                    for &(p, _) in &t.factors {
                        parity ^= sc.outcome_bit(a, p as usize) as u32;
                    }
                    beta[x_code * na + a] += if parity == 1 { -weight } else { weight };
                }
            }
        }
        beta
    }

    /// Exact maximum over all deterministic strategies (the local bound,
    /// by definition). Enumerates all 4^n per-party sign assignments.
    pub fn deterministic_max(&self) -> f64 {
        let n = self.scenario.parties();
        let mut best = f64::NEG_INFINITY;
        // signs[i][x] = (-1)^{f_i(x)} for strategy code bit pattern.
        for strategy in 0..(1usize << (2 * n)) {
            let sign = |party: usize, setting: u8| -> f64 {
                if (strategy >> (2 * party + setting as usize)) & 1 == 1 {
                    -1.0
                } else {
                    1.0
                }
            };
            let mut value = 0.0;
            for t in &self.terms {
                let mut prod = t.coeff;
                for &(p, s) in &t.factors {
                    prod *= sign(p as usize, s);
                }
                value += prod;
            }
            best = best.max(value);
        }
        best
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.scenario)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// White-noise visibility of a witness: the weight v at which the mixed
/// behavior v·P + (1−v)·P_w sits exactly on the bound,
/// v = (noise_val − bound)/(noise_val − max_val).
///
/// Values above 1 mean the witness was not violated at v = 1 (the sample is
/// inside the witness half-space); values are still meaningful and reported.
pub fn witness_visibility(max_val: f64, bound: f64, noise_val: f64) -> Result<f64, IneqError> {
    let denom = noise_val - max_val;
    if denom.abs() < 1e-300 {
        return Err(IneqError::NoViolationDirection);
    }
    Ok((noise_val - bound) / denom)
}

/// An inequality together with its prepared maximization engine: either the
/// precomputed relabeling orbit or the dedicated fast path for MABK.
#[derive(Debug, Clone)]
pub struct Prepared {
    ineq: Inequality,
    engine: Engine,
}

#[derive(Debug, Clone)]
enum Engine {
    Orbit(Orbit),
    MabkFast,
}

impl Prepared {
    /// Precomputes the relabeling orbit of the coefficient vector.
    pub fn with_orbit(ineq: Inequality, use_party_perms: bool) -> Self {
        let orbit = Orbit::new(&ineq, use_party_perms);
        Self {
            ineq,
            engine: Engine::Orbit(orbit),
        }
    }

    /// MABK with the multilinear-contraction fast path; required for
    /// n ≥ 5 where orbit enumeration is infeasible.
    pub fn mabk_fast(n: usize) -> Result<Self, IneqError> {
        Ok(Self {
            ineq: mabk(n)?,
            engine: Engine::MabkFast,
        })
    }

    pub fn ineq(&self) -> &Inequality {
        &self.ineq
    }

    /// Size of the precomputed orbit (0 for the fast path).
    pub fn orbit_len(&self) -> usize {
        match &self.engine {
            Engine::Orbit(o) => o.len(),
            Engine::MabkFast => 0,
        }
    }

    /// Largest value over all input liftings and relabelings on a
    /// three-setting behavior.
    pub fn bell_value(&self, p: &Behavior) -> Result<f64, IneqError> {
        match &self.engine {
            Engine::Orbit(o) => o.orbit_max(p),
            Engine::MabkFast => mabk_orbit_max_fast(p),
        }
    }

    /// Largest value over the precomputed gathered sub-behavior coordinates
    /// (see [`orbit::gather_sub_coords`]); avoids recomputing them when many
    /// inequalities test the same behavior.
    pub fn bell_value_on_subs(&self, p: &Behavior, subs: &[Vec<f64>]) -> Result<f64, IneqError> {
        match &self.engine {
            Engine::Orbit(o) => Ok(subs
                .iter()
                .map(|c| o.max_on_coords(c))
                .fold(f64::NEG_INFINITY, f64::max)),
            Engine::MabkFast => mabk_orbit_max_fast(p),
        }
    }
}

/// Maximum-k violation over inequalities and relabelings on a behavior.
pub fn orbit_max(ineq: &Inequality, p: &Behavior, use_party_perms: bool) -> Result<f64, IneqError> {
    Orbit::new(ineq, use_party_perms).orbit_max(p)
}

/// Certified entanglement depth: 1 + the largest k for which some
/// inequality's lifted maximum exceeds its k-producible bound (by more than
/// [`VIOLATION_TOL`]); 1 when no bound is violated.
pub fn certify_depth(p: &Behavior, family: &[Prepared]) -> Result<usize, IneqError> {
    if family.is_empty() {
        return Err(IneqError::EmptyFamily);
    }
    let mut depth = 1;
    for prepared in family {
        let value = prepared.bell_value(p)?;
        for (k, bound) in prepared.ineq.bounds.iter() {
            if value > bound + VIOLATION_TOL {
                depth = depth.max(k + 1);
            }
        }
    }
    Ok(depth)
}
