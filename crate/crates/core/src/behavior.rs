//! Bell scenarios, behaviors, correlator coordinates, relabelings, and
//! setting selections.
//!
//! A behavior is the conditional distribution P(a⃗|x⃗) of one two-outcome
//! measurement per party. Tables are stored dense, x⃗-major and a⃗-minor, with
//! party 0 as the most significant digit in both codes. Outcome a = 0 is the
//! +1 eigenvalue of the measured observable, a = 1 the −1 eigenvalue, so the
//! full correlator is E(x⃗) = Σ_a⃗ (−1)^(a₁+…+aₙ) P(a⃗|x⃗).

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

/// Tolerance for normalization and no-signaling checks at construction.
pub const BEHAVIOR_TOL: f64 = 1e-10;

/// Largest supported party count (dense tables stay under ~1.7M entries).
pub const MAX_PARTIES: usize = 8;

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("unsupported scenario: {parties} parties, {settings} settings (need 1..={MAX_PARTIES} parties, 2..=3 settings)")]
    UnsupportedScenario { parties: usize, settings: usize },
    #[error("table has {got} entries, scenario needs {want}")]
    TableSize { got: usize, want: usize },
    #[error("negative probability {value:.3e} at table index {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("outcome distribution for setting block {x_code} sums to {sum} (|sum-1| > {BEHAVIOR_TOL})")]
    NotNormalized { x_code: usize, sum: f64 },
    #[error("party {party} marginal shifts by {deviation:.3e} between settings (> {BEHAVIOR_TOL})")]
    Signaling { party: usize, deviation: f64 },
    #[error("scenario mismatch: {0}")]
    ScenarioMismatch(String),
    #[error("selection re-uses or overflows settings: {0}")]
    BadSelection(String),
    #[error("relabeling is not a valid group element: {0}")]
    BadRelabeling(String),
    #[error("behavior parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An (n, m, 2) Bell scenario: `parties` observers, `settings` inputs each,
/// two outcomes per measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario {
    parties: usize,
    settings: usize,
}

impl Scenario {
    pub fn new(parties: usize, settings: usize) -> Result<Self, BehaviorError> {
        if parties == 0 || parties > MAX_PARTIES || !(2..=3).contains(&settings) {
            return Err(BehaviorError::UnsupportedScenario { parties, settings });
        }
        Ok(Self { parties, settings })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn settings(&self) -> usize {
        self.settings
    }

    /// Number of joint settings m^n.
    pub fn setting_blocks(&self) -> usize {
        self.settings.pow(self.parties as u32)
    }

    /// Number of joint outcomes 2^n.
    pub fn outcome_blocks(&self) -> usize {
        1 << self.parties
    }

    /// Dense table length m^n · 2^n.
    pub fn table_len(&self) -> usize {
        self.setting_blocks() * self.outcome_blocks()
    }

    /// Length (m+1)^n of the correlator coordinate vector.
    pub fn corr_len(&self) -> usize {
        (self.settings + 1).pow(self.parties as u32)
    }

    /// Joint-setting code with party 0 most significant.
    pub fn x_code(&self, xs: &[u8]) -> usize {
        debug_assert_eq!(xs.len(), self.parties);
        xs.iter()
            .fold(0usize, |acc, &x| acc * self.settings + x as usize)
    }

    /// Joint-outcome code with party 0 most significant.
    pub fn a_code(&self, outcomes: &[u8]) -> usize {
        debug_assert_eq!(outcomes.len(), self.parties);
        outcomes.iter().fold(0usize, |acc, &a| (acc << 1) | a as usize)
    }

    /// Decode a joint-setting code into per-party settings.
    pub fn decode_x(&self, mut x_code: usize) -> Vec<u8> {
        let mut xs = vec![0u8; self.parties];
        for i in (0..self.parties).rev() {
            xs[i] = (x_code % self.settings) as u8;
            x_code /= self.settings;
        }
        xs
    }

    /// Bit of party `i` inside an outcome code.
    #[inline]
    pub fn outcome_bit(&self, a_code: usize, party: usize) -> u8 {
        ((a_code >> (self.parties - 1 - party)) & 1) as u8
    }

    /// Correlator coordinate code for one digit per party in 0..=m
    /// (0 = party excluded, d = setting d−1), party 0 most significant.
    pub fn corr_code(&self, digits: &[u8]) -> usize {
        debug_assert_eq!(digits.len(), self.parties);
        let base = self.settings + 1;
        digits
            .iter()
            .fold(0usize, |acc, &d| acc * base + d as usize)
    }

    /// Decode a correlator coordinate code into per-party digits.
    pub fn decode_corr(&self, mut code: usize) -> Vec<u8> {
        let base = self.settings + 1;
        let mut digits = vec![0u8; self.parties];
        for i in (0..self.parties).rev() {
            digits[i] = (code % base) as u8;
            code /= base;
        }
        digits
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},2)", self.parties, self.settings)
    }
}

/// A no-signaling behavior: dense table of P(a⃗|x⃗).
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    table: Vec<f64>,
}

impl Behavior {
    /// Validates shape, nonnegativity, normalization per joint setting, and
    /// no-signaling for every party before accepting the table.
    pub fn from_table(scenario: Scenario, table: Vec<f64>) -> Result<Self, BehaviorError> {
        if table.len() != scenario.table_len() {
            return Err(BehaviorError::TableSize {
                got: table.len(),
                want: scenario.table_len(),
            });
        }
        let b = Self { scenario, table };
        b.validate()?;
        Ok(b)
    }

    /// Construction for internal producers whose output is valid by
    /// construction; still fully checked in debug builds.
    pub(crate) fn from_table_unchecked(scenario: Scenario, table: Vec<f64>) -> Self {
        debug_assert_eq!(table.len(), scenario.table_len());
        let b = Self { scenario, table };
        debug_assert!(b.validate().is_ok(), "{:?}", b.validate().err());
        b
    }

    fn validate(&self) -> Result<(), BehaviorError> {
        let sc = self.scenario;
        let na = sc.outcome_blocks();
        for (index, &value) in self.table.iter().enumerate() {
            if value < -BEHAVIOR_TOL || value.is_nan() {
                return Err(BehaviorError::NegativeEntry { index, value });
            }
        }
        for x_code in 0..sc.setting_blocks() {
            let sum: f64 = self.table[x_code * na..(x_code + 1) * na].iter().sum();
            if (sum - 1.0).abs() > BEHAVIOR_TOL {
                return Err(BehaviorError::NotNormalized { x_code, sum });
            }
        }
        // No-signaling: for each party, the distribution of the other parties'
        // outcomes (with party i's outcome summed out) must not depend on
        // party i's setting. Compare every setting against setting 0.
        for party in 0..sc.parties {
            let mut reference: Option<Vec<f64>> = None;
            for xi in 0..sc.settings as u8 {
                let marg = self.party_summed_marginal(party, xi);
                match &reference {
                    None => reference = Some(marg),
                    Some(r) => {
                        let deviation = r
                            .iter()
                            .zip(&marg)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max);
                        if deviation > BEHAVIOR_TOL {
                            return Err(BehaviorError::Signaling { party, deviation });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// P(a_{-i} | x_{-i}) table slices with party `party` fixed to setting
    /// `xi` and its outcome summed out; indexed by (x_code of others, a_code
    /// of others) flattened.
    fn party_summed_marginal(&self, party: usize, xi: u8) -> Vec<f64> {
        let sc = self.scenario;
        let n = sc.parties;
        let na = sc.outcome_blocks();
        let others_x = sc.settings.pow((n - 1) as u32);
        let mut out = vec![0.0; others_x * (na >> 1)];
        let mut xs = vec![0u8; n];
        for ox in 0..others_x {
            // Decode `ox` into the other parties' settings.
            let mut rem = ox;
            for i in (0..n).rev() {
                if i == party {
                    xs[i] = xi;
                } else {
                    xs[i] = (rem % sc.settings) as u8;
                    rem /= sc.settings;
                }
            }
            let block = sc.x_code(&xs) * na;
            let bit = n - 1 - party;
            for a in 0..na {
                let hi = a >> (bit + 1);
                let lo = a & ((1 << bit) - 1);
                let reduced = (hi << bit) | lo;
                out[ox * (na >> 1) + reduced] += self.table[block + a];
            }
        }
        out
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn prob(&self, x_code: usize, a_code: usize) -> f64 {
        self.table[x_code * self.scenario.outcome_blocks() + a_code]
    }

    /// The maximally mixed behavior: every outcome pattern equally likely.
    pub fn white_noise(scenario: Scenario) -> Self {
        let p = 1.0 / scenario.outcome_blocks() as f64;
        Self {
            scenario,
            table: vec![p; scenario.table_len()],
        }
    }

    /// Convex mixture w·self + (1−w)·other.
    pub fn mix(&self, other: &Behavior, w: f64) -> Result<Self, BehaviorError> {
        if self.scenario != other.scenario {
            return Err(BehaviorError::ScenarioMismatch(format!(
                "{} vs {}",
                self.scenario, other.scenario
            )));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(BehaviorError::ScenarioMismatch(format!(
                "mixing weight {w} outside [0,1]"
            )));
        }
        let table = self
            .table
            .iter()
            .zip(&other.table)
            .map(|(p, q)| w * p + (1.0 - w) * q)
            .collect();
        Ok(Self {
            scenario: self.scenario,
            table,
        })
    }

    /// Marginal correlator for one digit per party (0 = excluded,
    /// d = setting d−1). Excluded parties are averaged over their settings,
    /// which agrees with the partial sum on exactly no-signaling behaviors
    /// and symmetrizes residual numerical signaling.
    pub fn correlator(&self, digits: &[u8]) -> f64 {
        let sc = self.scenario;
        assert_eq!(digits.len(), sc.parties);
        let excluded: Vec<usize> = (0..sc.parties).filter(|&i| digits[i] == 0).collect();
        let navg = sc.settings.pow(excluded.len() as u32);
        let mut xs: Vec<u8> = digits
            .iter()
            .map(|&d| if d == 0 { 0 } else { d - 1 })
            .collect();
        let mut total = 0.0;
        for avg_code in 0..navg {
            let mut rem = avg_code;
            for &i in &excluded {
                xs[i] = (rem % sc.settings) as u8;
                rem /= sc.settings;
            }
            let block = sc.x_code(&xs) * sc.outcome_blocks();
            let mut signed = 0.0;
            for a in 0..sc.outcome_blocks() {
                let mut parity = 0u32;
                for i in 0..sc.parties {
                    if digits[i] != 0 {
                        parity ^= sc.outcome_bit(a, i) as u32;
                    }
                }
                let p = self.table[block + a];
                signed += if parity == 1 { -p } else { p };
            }
            total += signed;
        }
        total / navg as f64
    }

    /// All correlator coordinates at once, indexed by [`Scenario::corr_code`].
    /// Coordinate 0 (all parties excluded) is the normalization and equals 1.
    ///
    /// One Walsh–Hadamard transform per joint setting computes every signed
    /// outcome sum, which is then averaged over the excluded parties'
    /// settings.
    pub fn corr_coords(&self) -> Vec<f64> {
        let sc = self.scenario;
        let n = sc.parties;
        let m = sc.settings;
        let na = sc.outcome_blocks();
        let mut coords = vec![0.0; sc.corr_len()];
        let mut signed = vec![0.0; na];
        let mut xs;
        for x_code in 0..sc.setting_blocks() {
            signed.copy_from_slice(&self.table[x_code * na..(x_code + 1) * na]);
            // Walsh–Hadamard over outcome bits: signed[s] becomes the
            // correlator restricted to the parties in bitmask s at x⃗.
            let mut h = 1;
            while h < na {
                for start in (0..na).step_by(h * 2) {
                    for i in start..start + h {
                        let (u, v) = (signed[i], signed[i + h]);
                        signed[i] = u + v;
                        signed[i + h] = u - v;
                    }
                }
                h *= 2;
            }
            xs = sc.decode_x(x_code);
            for (mask, &value) in signed.iter().enumerate() {
                // Party i participates iff bit (n-1-i) of mask is set; the
                // coordinate digit is then x_i+1, otherwise 0 (averaged).
                let mut code = 0usize;
                let mut weight = 1.0;
                for (i, &xi) in xs.iter().enumerate() {
                    let participates = (mask >> (n - 1 - i)) & 1 == 1;
                    code = code * (m + 1) + if participates { xi as usize + 1 } else { 0 };
                    if !participates {
                        weight /= m as f64;
                    }
                }
                coords[code] += value * weight;
            }
        }
        coords
    }

    /// Restriction to two settings per party.
    pub fn sub_behavior(&self, selection: &Selection) -> Result<Behavior, BehaviorError> {
        let sc = self.scenario;
        if selection.pairs.len() != sc.parties {
            return Err(BehaviorError::BadSelection(format!(
                "selection covers {} parties, scenario has {}",
                selection.pairs.len(),
                sc.parties
            )));
        }
        for &(s0, s1) in &selection.pairs {
            if s0 >= s1 || s1 as usize >= sc.settings {
                return Err(BehaviorError::BadSelection(format!(
                    "pair ({s0},{s1}) invalid for {} settings",
                    sc.settings
                )));
            }
        }
        let sub_sc = Scenario::new(sc.parties, 2)?;
        let na = sc.outcome_blocks();
        let mut table = Vec::with_capacity(sub_sc.table_len());
        let mut xs = vec![0u8; sc.parties];
        for x_code in 0..sub_sc.setting_blocks() {
            for i in 0..sc.parties {
                let bit = (x_code >> (sc.parties - 1 - i)) & 1;
                let (s0, s1) = selection.pairs[i];
                xs[i] = if bit == 0 { s0 } else { s1 };
            }
            let block = sc.x_code(&xs) * na;
            table.extend_from_slice(&self.table[block..block + na]);
        }
        Ok(Behavior::from_table_unchecked(sub_sc, table))
    }

    /// Applies a relabeling, producing the transformed behavior.
    ///
    /// The relabeling maps the event "party i measured x and got a" of this
    /// behavior to the event "party π(i) measured σ_i(x) and got
    /// a ⊕ flip_i(x)" of the result.
    pub fn relabel(&self, g: &Relabeling) -> Result<Behavior, BehaviorError> {
        let sc = self.scenario;
        g.check(sc)?;
        let na = sc.outcome_blocks();
        let mut table = vec![0.0; sc.table_len()];
        let mut old_xs = vec![0u8; sc.parties];
        let mut new_xs = vec![0u8; sc.parties];
        for x_code in 0..sc.setting_blocks() {
            let mut rem = x_code;
            for i in (0..sc.parties).rev() {
                old_xs[i] = (rem % sc.settings) as u8;
                rem /= sc.settings;
            }
            for i in 0..sc.parties {
                new_xs[g.party_perm[i] as usize] = g.setting_perms[i][old_xs[i] as usize];
            }
            let new_block = sc.x_code(&new_xs) * na;
            let old_block = x_code * na;
            for a in 0..na {
                let mut new_a = 0usize;
                for i in 0..sc.parties {
                    let bit = sc.outcome_bit(a, i);
                    let flipped = bit ^ g.outcome_flips[i][old_xs[i] as usize] as u8;
                    new_a |= (flipped as usize) << (sc.parties - 1 - g.party_perm[i] as usize);
                }
                table[new_block + new_a] = self.table[old_block + a];
            }
        }
        Ok(Behavior::from_table_unchecked(sc, table))
    }

    /// Writes the table as CSV: a `parties,settings` header line, then one
    /// line of 2^n probabilities per joint setting in x⃗-major order.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<(), BehaviorError> {
        let sc = self.scenario;
        writeln!(w, "{},{}", sc.parties, sc.settings)?;
        let na = sc.outcome_blocks();
        for x_code in 0..sc.setting_blocks() {
            let row: Vec<String> = self.table[x_code * na..(x_code + 1) * na]
                .iter()
                .map(|p| format!("{p}"))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the format written by [`Behavior::to_csv`]; `#` lines are
    /// comments. The table is re-validated on load.
    pub fn from_csv<R: BufRead>(r: R) -> Result<Self, BehaviorError> {
        let mut lines = r
            .lines()
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| BehaviorError::Parse("empty file".into()))?;
        let mut parts = header.split(',');
        let parties: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| BehaviorError::Parse(format!("bad header `{header}`")))?;
        let settings: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| BehaviorError::Parse(format!("bad header `{header}`")))?;
        let sc = Scenario::new(parties, settings)?;
        let mut table = Vec::with_capacity(sc.table_len());
        for line in lines {
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| BehaviorError::Parse(format!("bad value `{field}`")))?;
                table.push(v);
            }
        }
        Behavior::from_table(sc, table)
    }
}

/// Per-party choice of two settings, stored as ordered pairs (s0 < s1).
/// Setting s0 becomes input 0 of the restricted behavior, s1 becomes input 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selection {
    pub pairs: Vec<(u8, u8)>,
}

impl Selection {
    /// The identity selection for a two-setting scenario.
    pub fn identity(parties: usize) -> Self {
        Self {
            pairs: vec![(0, 1); parties],
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .pairs
            .iter()
            .map(|(a, b)| format!("{a}{b}"))
            .collect();
        write!(f, "{}", parts.join("|"))
    }
}

/// All per-party choices of 2 of m settings: C(m,2)^n selections in
/// lexicographic order (per party: (0,1), (0,2), (1,2) for m = 3).
pub fn enumerate_selections(scenario: Scenario) -> Vec<Selection> {
    let m = scenario.settings as u8;
    let mut pairs = Vec::new();
    for s0 in 0..m {
        for s1 in s0 + 1..m {
            pairs.push((s0, s1));
        }
    }
    let mut out = Vec::new();
    let mut current = vec![pairs[0]; scenario.parties];
    fn rec(
        party: usize,
        parties: usize,
        pairs: &[(u8, u8)],
        current: &mut Vec<(u8, u8)>,
        out: &mut Vec<Selection>,
    ) {
        if party == parties {
            out.push(Selection {
                pairs: current.clone(),
            });
            return;
        }
        for &p in pairs {
            current[party] = p;
            rec(party + 1, parties, pairs, current, out);
        }
    }
    rec(0, scenario.parties, &pairs, &mut current, &mut out);
    out
}

/// A relabeling: party permutation, per-party setting permutations, and
/// per-party per-setting outcome flips.
///
/// `party_perm[i]` is the new index of party i; `setting_perms[i][x]` is the
/// new setting of party i's input x; `outcome_flips[i][x]` flips the outcome
/// of party i's input x (before the setting is renamed).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Relabeling {
    pub party_perm: Vec<u8>,
    pub setting_perms: Vec<Vec<u8>>,
    pub outcome_flips: Vec<Vec<bool>>,
}

impl Relabeling {
    pub fn identity(scenario: Scenario) -> Self {
        Self {
            party_perm: (0..scenario.parties as u8).collect(),
            setting_perms: vec![(0..scenario.settings as u8).collect(); scenario.parties],
            outcome_flips: vec![vec![false; scenario.settings]; scenario.parties],
        }
    }

    fn check(&self, scenario: Scenario) -> Result<(), BehaviorError> {
        let n = scenario.parties;
        let m = scenario.settings;
        if self.party_perm.len() != n || self.setting_perms.len() != n || self.outcome_flips.len() != n
        {
            return Err(BehaviorError::BadRelabeling("length mismatch".into()));
        }
        let mut seen = vec![false; n];
        for &p in &self.party_perm {
            if p as usize >= n || seen[p as usize] {
                return Err(BehaviorError::BadRelabeling("party_perm not a permutation".into()));
            }
            seen[p as usize] = true;
        }
        for (perm, flips) in self.setting_perms.iter().zip(&self.outcome_flips) {
            if perm.len() != m || flips.len() != m {
                return Err(BehaviorError::BadRelabeling("per-party length mismatch".into()));
            }
            let mut seen = vec![false; m];
            for &s in perm {
                if s as usize >= m || seen[s as usize] {
                    return Err(BehaviorError::BadRelabeling(
                        "setting_perm not a permutation".into(),
                    ));
                }
                seen[s as usize] = true;
            }
        }
        Ok(())
    }

    /// Group composition: `self.compose(g)` acts like `self` after `g`.
    pub fn compose(&self, g: &Relabeling) -> Relabeling {
        let n = self.party_perm.len();
        let m = self.setting_perms[0].len();
        let mut party_perm = vec![0u8; n];
        let mut setting_perms = vec![vec![0u8; m]; n];
        let mut outcome_flips = vec![vec![false; m]; n];
        for i in 0..n {
            let j = g.party_perm[i] as usize;
            party_perm[i] = self.party_perm[j];
            for x in 0..m {
                let gx = g.setting_perms[i][x] as usize;
                setting_perms[i][x] = self.setting_perms[j][gx];
                outcome_flips[i][x] = g.outcome_flips[i][x] ^ self.outcome_flips[j][gx];
            }
        }
        Relabeling {
            party_perm,
            setting_perms,
            outcome_flips,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_behavior(scenario: Scenario, seed: u64) -> Behavior {
        // Product of independent per-party response distributions mixed with
        // noise: always a valid no-signaling behavior.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = scenario.parties();
        let m = scenario.settings();
        // Local response tables p_i(a|x), mixed over a few deterministic runs.
        let mut table = vec![0.0; scenario.table_len()];
        let runs = 5;
        let mut weights: Vec<f64> = (0..runs).map(|_| rng.gen::<f64>() + 0.01).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        for &w in &weights {
            let locals: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen::<f64>()).collect())
                .collect();
            for x_code in 0..scenario.setting_blocks() {
                let xs = scenario.decode_x(x_code);
                for a in 0..scenario.outcome_blocks() {
                    let mut p = w;
                    for i in 0..n {
                        let p1 = locals[i][xs[i] as usize];
                        p *= if scenario.outcome_bit(a, i) == 1 { p1 } else { 1.0 - p1 };
                    }
                    table[x_code * scenario.outcome_blocks() + a] += p;
                }
            }
        }
        Behavior::from_table(scenario, table).unwrap()
    }

    fn random_relabeling(scenario: Scenario, seed: u64) -> Relabeling {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = scenario.parties();
        let m = scenario.settings();
        let mut party_perm: Vec<u8> = (0..n as u8).collect();
        party_perm.shuffle(&mut rng);
        let setting_perms = (0..n)
            .map(|_| {
                let mut p: Vec<u8> = (0..m as u8).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let outcome_flips = (0..n)
            .map(|_| (0..m).map(|_| rng.gen::<bool>()).collect())
            .collect();
        Relabeling {
            party_perm,
            setting_perms,
            outcome_flips,
        }
    }

    #[test]
    fn selection_counts_match_choose_two_powers() {
        let s = |n, m| enumerate_selections(Scenario::new(n, m).unwrap()).len();
        assert_eq!(s(1, 3), 3);
        assert_eq!(s(3, 3), 27);
        assert_eq!(s(8, 3), 6561);
        assert_eq!(s(4, 2), 1);
    }

    #[test]
    fn white_noise_correlators_vanish() {
        let sc = Scenario::new(3, 3).unwrap();
        let w = Behavior::white_noise(sc);
        let coords = w.corr_coords();
        assert!((coords[0] - 1.0).abs() < 1e-14);
        for &c in &coords[1..] {
            assert!(c.abs() < 1e-14);
        }
    }

    #[test]
    fn corr_coords_match_direct_correlator() {
        for n in 1..=4 {
            let sc = Scenario::new(n, 3).unwrap();
            let b = random_behavior(sc, 42 + n as u64);
            let coords = b.corr_coords();
            for code in 0..sc.corr_len() {
                let digits = sc.decode_corr(code);
                let direct = b.correlator(&digits);
                assert!(
                    (coords[code] - direct).abs() < 1e-12,
                    "n={n} code={code}: {} vs {direct}",
                    coords[code]
                );
            }
        }
    }

    #[test]
    fn relabel_is_group_action() {
        let sc = Scenario::new(3, 3).unwrap();
        let b = random_behavior(sc, 7);
        for seed in 0..5 {
            let g = random_relabeling(sc, 100 + seed);
            let h = random_relabeling(sc, 200 + seed);
            let lhs = b.relabel(&g).unwrap().relabel(&h).unwrap();
            let rhs = b.relabel(&h.compose(&g)).unwrap();
            for (p, q) in lhs.table().iter().zip(rhs.table()) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn relabel_identity_is_noop() {
        let sc = Scenario::new(2, 2).unwrap();
        let b = random_behavior(sc, 3);
        let id = Relabeling::identity(sc);
        assert_eq!(b.relabel(&id).unwrap().table(), b.table());
    }

    #[test]
    fn sub_behavior_identity_selection_roundtrips_m2() {
        let sc = Scenario::new(3, 2).unwrap();
        let b = random_behavior(sc, 11);
        let sel = Selection::identity(3);
        let sub = b.sub_behavior(&sel).unwrap();
        assert_eq!(sub.table(), b.table());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let sc = Scenario::new(2, 3).unwrap();
        let b = random_behavior(sc, 5);
        let mut buf = Vec::new();
        b.to_csv(&mut buf).unwrap();
        let b2 = Behavior::from_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(b.table(), b2.table());
    }

    #[test]
    fn rejects_signaling_table() {
        let sc = Scenario::new(2, 2).unwrap();
        // Party 0's marginal depends on party 1's setting.
        let mut table = vec![0.25; sc.table_len()];
        table[0] = 0.5;
        table[1] = 0.0;
        let err = Behavior::from_table(sc, table);
        assert!(matches!(err, Err(BehaviorError::Signaling { .. })));
    }

    #[test]
    fn rejects_unnormalized_table() {
        let sc = Scenario::new(2, 2).unwrap();
        let table = vec![0.3; sc.table_len()];
        assert!(matches!(
            Behavior::from_table(sc, table),
            Err(BehaviorError::NotNormalized { .. })
        ));
    }

    proptest! {
        #[test]
        fn mix_is_linear_in_correlators(w in 0.0f64..1.0) {
            let sc = Scenario::new(3, 2).unwrap();
            let b = random_behavior(sc, 21);
            let q = Behavior::white_noise(sc);
            let mixed = b.mix(&q, w).unwrap();
            let cb = b.corr_coords();
            let cq = q.corr_coords();
            let cm = mixed.corr_coords();
            for i in 0..cm.len() {
                prop_assert!((cm[i] - (w * cb[i] + (1.0 - w) * cq[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn relabel_preserves_validity(seed in 0u64..500) {
            let sc = Scenario::new(3, 3).unwrap();
            let b = random_behavior(sc, seed);
            let g = random_relabeling(sc, seed.wrapping_mul(31).wrapping_add(1));
            let rb = b.relabel(&g).unwrap();
            // from_table re-runs the full validation.
            prop_assert!(Behavior::from_table(sc, rb.table().to_vec()).is_ok());
        }
    }
}
