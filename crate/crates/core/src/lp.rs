//! Exact local-polytope membership by linear programming.
//!
//! The local set of an (n,m,2) scenario is the convex hull of all joint
//! deterministic strategies. Membership and white-noise robustness of a
//! behavior P are decided by the visibility program
//!
//!   max v  s.t.  v*P + (1-v)*P_w = sum_l q_l D_l,  q >= 0,  sum q = 1,
//!                0 <= v <= V_CAP,
//!
//! posed over correlator coordinates (a no-signaling-complete basis, so
//! the equality system has no redundant rows). v* >= 1 means P is local;
//! v* < 1 is the exact critical visibility at which the noisy behavior
//! leaves the polytope. The solver is a dense two-phase primal simplex
//! with a Bland fallback for degeneracy.

use thiserror::Error;

use crate::behavior::{enumerate_selections, Behavior, BehaviorError, Scenario, Selection};

/// Objective cap that keeps the program bounded for behaviors (like white
/// noise itself) whose noisy family never leaves the polytope.
pub const V_CAP: f64 = 10.0;

/// Entrywise tolerance for the returned decomposition certificate.
pub const CERT_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-9;
const LEX_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("vertex budget exceeded for {scenario}: {vertices} deterministic strategies (limit {limit}); use inequality-based certification instead")]
    BudgetExceeded {
        scenario: Scenario,
        vertices: usize,
        limit: usize,
    },
    #[error("simplex failure: {0}")]
    SolverFailure(String),
    #[error("certificate residual {residual:.3e} exceeds {CERT_TOL:.1e}")]
    BadCertificate { residual: f64 },
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
}

/// All joint deterministic strategies of a scenario, stored compactly as
/// per-party outcome assignments (bit s of a party's code is its outcome
/// for setting s). Column order is lexicographic in the per-party codes
/// with party 0 most significant.
#[derive(Debug, Clone)]
pub struct VertexSet {
    scenario: Scenario,
    strategies: Vec<u32>,
}

/// Solution status of a visibility program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    /// Optimal visibility below the cap.
    Solved,
    /// The noisy family stays local all the way to the cap.
    Capped,
    /// No feasible decomposition (cannot occur for valid behaviors).
    Infeasible,
}

/// Result of a visibility LP.
#[derive(Debug, Clone)]
pub struct LpResult {
    /// Optimal visibility; >= 1 means the behavior itself is local.
    pub v_star: f64,
    /// Vertex weights certifying the decomposition at v_star.
    pub weights: Option<Vec<f64>>,
    pub status: LpStatus,
    /// For lifted runs, the two-setting selection attaining the minimum.
    pub selection: Option<Selection>,
}

/// Enumerate the deterministic vertex set, refusing scenarios whose
/// strategy count exceeds the supported budget (n <= 5 for m = 3,
/// n <= 7 for m = 2).
pub fn deterministic_vertices(scenario: Scenario) -> Result<VertexSet, LpError> {
    let per_party = 1usize << scenario.settings();
    let count = per_party.pow(scenario.parties() as u32);
    let limit = if scenario.settings() == 3 {
        8usize.pow(5)
    } else {
        4usize.pow(7)
    };
    if count > limit {
        return Err(LpError::BudgetExceeded {
            scenario,
            vertices: count,
            limit,
        });
    }
    Ok(VertexSet {
        scenario,
        strategies: (0..count as u32).collect(),
    })
}

impl VertexSet {
    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    fn party_code(&self, strategy: u32, party: usize) -> u32 {
        let m = self.scenario.settings();
        let shift = m * (self.scenario.parties() - 1 - party);
        (strategy >> shift) & ((1 << m) - 1)
    }

    /// Sign (+-1) of `party`'s outcome under `strategy` at `setting`.
    fn sign(&self, strategy: u32, party: usize, setting: usize) -> f64 {
        if (self.party_code(strategy, party) >> setting) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Correlator coordinates of vertex `idx` (length scenario.corr_len()).
    pub fn corr_column(&self, idx: usize) -> Vec<f64> {
        let sc = self.scenario;
        let strategy = self.strategies[idx];
        let mut col = vec![0.0; sc.corr_len()];
        for (code, slot) in col.iter_mut().enumerate() {
            let digits = sc.decode_corr(code);
            let mut prod = 1.0;
            for (party, &d) in digits.iter().enumerate() {
                if d > 0 {
                    prod *= self.sign(strategy, party, (d - 1) as usize);
                }
            }
            *slot = prod;
        }
        col
    }

    /// The vertex as a full behavior table (deterministic outcomes).
    pub fn behavior(&self, idx: usize) -> Behavior {
        let sc = self.scenario;
        let strategy = self.strategies[idx];
        let mut table = vec![0.0; sc.table_len()];
        for x_code in 0..sc.setting_blocks() {
            let xs = sc.decode_x(x_code);
            let mut a_code = 0usize;
            for (party, &x) in xs.iter().enumerate() {
                let bit = if self.sign(strategy, party, x as usize) > 0.0 {
                    0usize
                } else {
                    1usize
                };
                a_code |= bit << (sc.parties() - 1 - party);
            }
            table[x_code * sc.outcome_blocks() + a_code] = 1.0;
        }
        Behavior::from_table(sc, table).expect("deterministic tables are valid")
    }
}

/// Critical visibility of `p` with respect to the local polytope of its
/// own scenario.
pub fn lp_visibility(p: &Behavior) -> Result<LpResult, LpError> {
    let vertices = deterministic_vertices(p.scenario())?;
    solve_visibility(p, &vertices)
}

/// Minimum of `lp_visibility` over all two-setting sub-behaviors of a
/// three-setting behavior; the optimal selection is recorded.
pub fn lifted_lp_visibility(p: &Behavior) -> Result<LpResult, LpError> {
    let selections = enumerate_selections(p.scenario());
    let sub_scenario = Scenario::new(p.scenario().parties(), 2)?;
    let vertices = deterministic_vertices(sub_scenario)?;
    let mut best: Option<LpResult> = None;
    for sel in selections {
        let sub = p.sub_behavior(&sel)?;
        let mut res = solve_visibility(&sub, &vertices)?;
        if best.as_ref().map_or(true, |b| res.v_star < b.v_star) {
            res.selection = Some(sel);
            best = Some(res);
        }
    }
    Ok(best.expect("selection enumeration is never empty"))
}

fn solve_visibility(p: &Behavior, vertices: &VertexSet) -> Result<LpResult, LpError> {
    let sc = p.scenario();
    let n_rows = sc.corr_len() + 1; // equality rows plus the cap row
    let n_verts = vertices.len();
    let target = p.corr_coords();

    // Columns: q_0..q_{N-1}, v, cap slack, one artificial per equality row.
    let n_cols = n_verts + 2 + sc.corr_len();
    let v_col = n_verts;
    let slack_col = n_verts + 1;
    let art0 = n_verts + 2;

    let mut tab = vec![0.0f64; n_rows * n_cols];
    let mut rhs = vec![0.0f64; n_rows];
    for j in 0..n_verts {
        let col = vertices.corr_column(j);
        for (c, &t) in col.iter().enumerate() {
            tab[c * n_cols + j] = t;
        }
    }
    for c in 1..sc.corr_len() {
        tab[c * n_cols + v_col] = -target[c];
    }
    for c in 0..sc.corr_len() {
        tab[c * n_cols + art0 + c] = 1.0;
    }
    rhs[0] = 1.0;
    let cap_row = sc.corr_len();
    tab[cap_row * n_cols + v_col] = 1.0;
    tab[cap_row * n_cols + slack_col] = 1.0;
    rhs[cap_row] = V_CAP;

    // Basis: artificials on equality rows, slack on the cap row.
    let mut basis: Vec<usize> = (0..sc.corr_len()).map(|c| art0 + c).collect();
    basis.push(slack_col);

    // Phase-1 objective (min sum of artificials) expressed as reduced
    // costs over nonbasic columns; phase-2 objective (max v == min -v)
    // carried through the same pivots.
    let mut obj1 = vec![0.0f64; n_cols + 1];
    for c in 0..sc.corr_len() {
        for j in 0..n_cols {
            obj1[j] -= tab[c * n_cols + j];
        }
        obj1[n_cols] -= rhs[c];
    }
    let mut obj2 = vec![0.0f64; n_cols + 1];
    obj2[v_col] = -1.0;

    run_simplex(
        &mut tab, &mut rhs, &mut basis, &mut obj1, Some(&mut obj2), n_rows, n_cols,
    )?;
    let infeas = -obj1[n_cols];
    if infeas > 1e-7 {
        return Ok(LpResult {
            v_star: 0.0,
            weights: None,
            status: LpStatus::Infeasible,
            selection: None,
        });
    }
    // Freeze artificials out of phase 2 by pricing them prohibitively.
    for j in art0..n_cols {
        obj2[j] = f64::INFINITY;
    }
    run_simplex(&mut tab, &mut rhs, &mut basis, &mut obj2, None, n_rows, n_cols)?;

    let mut v_star = 0.0;
    let mut weights = vec![0.0f64; n_verts];
    for (r, &b) in basis.iter().enumerate() {
        if b == v_col {
            v_star = rhs[r];
        } else if b < n_verts {
            weights[b] = rhs[r];
        } else if b >= art0 && rhs[r] > 1e-7 {
            return Err(LpError::SolverFailure(format!(
                "artificial variable stuck at {:.3e}",
                rhs[r]
            )));
        }
    }

    // Certificate: the weighted vertex mixture must reproduce the affine
    // combination v*P + (1-v*)P_w entrywise in probability space (for
    // v* > 1 the white-noise weight is negative but the identity still
    // holds at any feasible point of the program).
    let mut mixture = vec![0.0f64; sc.table_len()];
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            let vb = vertices.behavior(j);
            for (m, t) in mixture.iter_mut().zip(vb.table()) {
                *m += w * t;
            }
        }
    }
    let wn = 1.0 / sc.outcome_blocks() as f64;
    let residual = mixture
        .iter()
        .zip(p.table())
        .map(|(m, t)| (m - (v_star * t + (1.0 - v_star) * wn)).abs())
        .fold(0.0, f64::max);
    if residual > CERT_TOL {
        return Err(LpError::BadCertificate { residual });
    }

    let status = if v_star >= V_CAP - 1e-6 {
        LpStatus::Capped
    } else {
        LpStatus::Solved
    };
    Ok(LpResult {
        v_star,
        weights: Some(weights),
        status,
        selection: None,
    })
}

/// Dense primal simplex on the given tableau: minimizes `obj`, keeping
/// `carry` (a second objective row) consistent through the same pivots.
/// Dantzig pricing; the leaving row is chosen by the lexicographic ratio
/// test, which resolves the heavy degeneracy of these programs (almost
/// every right-hand side is zero) without cycling.
fn run_simplex(
    tab: &mut [f64],
    rhs: &mut [f64],
    basis: &mut [usize],
    obj: &mut [f64],
    mut carry: Option<&mut Vec<f64>>,
    n_rows: usize,
    n_cols: usize,
) -> Result<(), LpError> {
    for _iter in 0..200_000 {
        let mut enter: Option<usize> = None;
        let mut best = -PIVOT_TOL;
        for j in 0..n_cols {
            if obj[j] < best && obj[j].is_finite() {
                best = obj[j];
                enter = Some(j);
            }
        }
        let Some(e) = enter else {
            return Ok(());
        };
        let mut leave: Option<usize> = None;
        for r in 0..n_rows {
            if tab[r * n_cols + e] > PIVOT_TOL {
                match leave {
                    None => leave = Some(r),
                    Some(l) => {
                        if lex_less(tab, rhs, n_cols, r, l, e) {
                            leave = Some(r);
                        }
                    }
                }
            }
        }
        let Some(l) = leave else {
            return Err(LpError::SolverFailure("unbounded direction".into()));
        };
        pivot(tab, rhs, obj, carry.as_deref_mut(), n_rows, n_cols, l, e);
        basis[l] = e;
    }
    Err(LpError::SolverFailure("iteration limit reached".into()))
}

/// True when row `r` precedes row `l` in the lexicographic ratio order
/// for entering column `e`: compare rhs/pivot first, then each tableau
/// column scaled by the pivot.
fn lex_less(tab: &[f64], rhs: &[f64], n_cols: usize, r: usize, l: usize, e: usize) -> bool {
    let ar = tab[r * n_cols + e];
    let al = tab[l * n_cols + e];
    let dr = rhs[r] / ar;
    let dl = rhs[l] / al;
    if (dr - dl).abs() > LEX_TOL {
        return dr < dl;
    }
    for j in 0..n_cols {
        let vr = tab[r * n_cols + j] / ar;
        let vl = tab[l * n_cols + j] / al;
        if (vr - vl).abs() > LEX_TOL {
            return vr < vl;
        }
    }
    false
}

fn pivot(
    tab: &mut [f64],
    rhs: &mut [f64],
    obj: &mut [f64],
    carry: Option<&mut Vec<f64>>,
    n_rows: usize,
    n_cols: usize,
    l: usize,
    e: usize,
) {
    let piv = tab[l * n_cols + e];
    let inv = 1.0 / piv;
    for j in 0..n_cols {
        tab[l * n_cols + j] *= inv;
    }
    rhs[l] *= inv;
    tab[l * n_cols + e] = 1.0;
    for r in 0..n_rows {
        if r == l {
            continue;
        }
        let f = tab[r * n_cols + e];
        if f != 0.0 {
            for j in 0..n_cols {
                tab[r * n_cols + j] -= f * tab[l * n_cols + j];
            }
            rhs[r] -= f * rhs[l];
            tab[r * n_cols + e] = 0.0;
        }
    }
    let f = obj[e];
    if f != 0.0 && f.is_finite() {
        for j in 0..n_cols {
            if obj[j].is_finite() {
                obj[j] -= f * tab[l * n_cols + j];
            }
        }
        obj[n_cols] -= f * rhs[l];
        obj[e] = 0.0;
    }
    if let Some(c) = carry {
        let f = c[e];
        if f != 0.0 && f.is_finite() {
            for j in 0..n_cols {
                if c[j].is_finite() {
                    c[j] -= f * tab[l * n_cols + j];
                }
            }
            c[n_cols] -= f * rhs[l];
            c[e] = 0.0;
        }
    }
}
