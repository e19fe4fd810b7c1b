//! Semidefinite outer relaxations of the k-producible quantum sets and
//! the visibilities they certify.
//!
//! A behavior is k-producible when it arises from a state whose
//! entanglement is confined to blocks of at most k parties. The level-1
//! relaxation replaces each such model by a family of moment matrices,
//! one per maximal partition of the parties into blocks of size <= k:
//! rows and columns are indexed by words with at most one dichotomic
//! observable per party, and the matrix of a partition must be positive
//! semidefinite and stay positive under partial transposition across
//! every bipartition that separates its blocks. Word products that
//! reduce to the same monomial (up to global reversal, which transposes
//! the matrix) share one variable, so the internal-consistency
//! constraints hold structurally. Behavior-indexed entries, summed over
//! partitions, are pinned to the correlators of the noisy target
//! v * P + (1 - v) * P_white, and the program maximizes v.
//!
//! The reported maximum v* is the certified visibility: v* < 1 proves P
//! lies outside the relaxation, hence outside every k-producible model,
//! and the duals of the pinning rows assemble a linear witness for that
//! exclusion (validated via [`SdpResult::dual_check`]).

use thiserror::Error;

use crate::behavior::{enumerate_selections, Behavior, BehaviorError, Scenario, Selection};
use crate::conic::{
    self, svec_len, ConeSpec, ConicProblem, ConicStatus, Settings, Solution, SparseMat,
};

/// Visibilities at or above this cap are reported as Capped: the noisy
/// family stays inside the relaxation as far as the program can see.
pub const SDP_CAP: f64 = 10.0;
/// Required duality gap (and residual) tolerance for a solve to count.
pub const SDP_GAP_TOL: f64 = 1e-6;
/// Iteration budget for the first-order solver.
pub const SDP_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("moment matrices for {parties} parties with {settings} settings exceed the budget")]
    BudgetExceeded { parties: usize, settings: usize },
    #[error("producibility parameter k = {k} outside 1..={parties}")]
    BadK { k: usize, parties: usize },
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Conic(#[from] conic::ConicError),
}

/// All maximal partitions of `n` parties into blocks of size at most
/// `k`: maximality (no two blocks can merge and stay within k) is
/// exactly the condition that every pair of block sizes sums above k.
/// Blocks are sorted by least element; parties are 0-based.
pub fn max_partitions(n: usize, k: usize) -> Vec<Vec<Vec<u8>>> {
    assert!(k >= 1 && k <= n);
    // restricted growth strings enumerate set partitions uniquely
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    loop {
        let nb = rgs.iter().copied().max().unwrap() + 1;
        let mut blocks: Vec<Vec<u8>> = vec![Vec::new(); nb];
        for (party, &b) in rgs.iter().enumerate() {
            blocks[b].push(party as u8);
        }
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let small = sizes.iter().all(|&s| s <= k);
        let maximal = (0..nb).all(|i| (i + 1..nb).all(|j| sizes[i] + sizes[j] > k));
        if small && maximal {
            out.push(blocks);
        }
        // next restricted growth string
        let mut i = n;
        loop {
            if i == 1 {
                return out;
            }
            i -= 1;
            let prefix_max = rgs[..i].iter().copied().max().unwrap();
            if rgs[i] <= prefix_max {
                rgs[i] += 1;
                rgs[i + 1..].fill(0);
                break;
            }
        }
    }
}

/// Word arithmetic for one scenario: letters are 0 (identity), 1..=m
/// (one observable per setting), then ordered products of two distinct
/// observables. Global reversal maps a word tuple to its adjoint.
struct WordContext {
    n: usize,
    m: usize,
    /// moment matrix side: words with letters 0..=m per party
    side: usize,
    prod: Vec<u8>,
    /// tuple code (base m^2 + 1) -> class index
    canon: Vec<u32>,
    n_classes: usize,
    l_pows: Vec<usize>,
    w_pows: Vec<usize>,
}

impl WordContext {
    fn new(scenario: Scenario) -> Result<Self, SdpError> {
        let (n, m) = (scenario.parties(), scenario.settings());
        let budget_ok = (m == 3 && n <= 4) || (m == 2 && n <= 5);
        if !budget_ok {
            return Err(SdpError::BudgetExceeded {
                parties: n,
                settings: m,
            });
        }
        let letters = m * m + 1;
        // letter products: prod[a * (m+1) + b] for single-or-identity a, b
        let mut pair_code = vec![0u8; (m + 1) * (m + 1)];
        let mut next = (m + 1) as u8;
        for a in 1..=m {
            for b in a + 1..=m {
                pair_code[a * (m + 1) + b] = next;
                pair_code[b * (m + 1) + a] = next + 1;
                next += 2;
            }
        }
        let mut prod = vec![0u8; (m + 1) * (m + 1)];
        for a in 0..=m {
            for b in 0..=m {
                prod[a * (m + 1) + b] = if a == 0 {
                    b as u8
                } else if b == 0 {
                    a as u8
                } else if a == b {
                    0
                } else {
                    pair_code[a * (m + 1) + b]
                };
            }
        }
        let mut rev = vec![0u8; letters];
        for (l, r) in rev.iter_mut().enumerate().take(m + 1) {
            *r = l as u8;
        }
        let mut l = (m + 1) as u8;
        while (l as usize) < letters {
            rev[l as usize] = l + 1;
            rev[l as usize + 1] = l;
            l += 2;
        }

        let l_pows: Vec<usize> = (0..n).map(|i| letters.pow((n - 1 - i) as u32)).collect();
        let w_pows: Vec<usize> = (0..n).map(|i| (m + 1).pow((n - 1 - i) as u32)).collect();
        let total = letters.pow(n as u32);
        let rev_tuple = |t: usize| -> usize {
            let mut out = 0usize;
            let mut rem = t;
            for &pw in &l_pows {
                let letter = rem / pw;
                rem %= pw;
                out += rev[letter] as usize * pw;
            }
            out
        };
        let mut canon = vec![u32::MAX; total];
        let mut n_classes = 0usize;
        for t in 0..total {
            let r = rev_tuple(t);
            if t <= r {
                canon[t] = n_classes as u32;
                n_classes += 1;
            } else {
                canon[t] = canon[r];
            }
        }
        Ok(Self {
            n,
            m,
            side: (m + 1).pow(n as u32),
            prod,
            canon,
            n_classes,
            l_pows,
            w_pows,
        })
    }

    /// Class of the monomial for entry (row word u, column word v),
    /// optionally with the parties in `pt_mask` partially transposed
    /// (their word letters swapped between u and v).
    fn entry_class(&self, u: usize, v: usize, pt_mask: u8) -> u32 {
        let mp1 = self.m + 1;
        let mut t = 0usize;
        let (mut ur, mut vr) = (u, v);
        for i in 0..self.n {
            let wp = self.w_pows[i];
            let mut a = ur / wp;
            let mut b = vr / wp;
            ur %= wp;
            vr %= wp;
            if (pt_mask >> i) & 1 == 1 {
                std::mem::swap(&mut a, &mut b);
            }
            t += self.prod[a * mp1 + b] as usize * self.l_pows[i];
        }
        self.canon[t]
    }

    /// Class of a correlator coordinate (identity-or-single words only).
    fn corr_class(&self, scenario: Scenario, c: usize) -> u32 {
        let digits = scenario.decode_corr(c);
        let t: usize = digits
            .iter()
            .zip(&self.l_pows)
            .map(|(&d, &pw)| d as usize * pw)
            .sum();
        self.canon[t]
    }
}

/// Row/column bookkeeping of an assembled program, for dual extraction.
pub struct SdpMeta {
    pub n_classes: usize,
    pub n_partitions: usize,
    pub side: usize,
    pub psd_blocks: usize,
    /// zero row index of the pinning constraint for correlator c (c >= 1)
    pub pinning_row_base: usize,
    pub trace_row: usize,
    pub cap_row: usize,
}

/// Assemble the level-1 k-producibility program for `p` in conic
/// standard form. Exposed so the exact program can be dumped and
/// cross-checked by an external solver.
pub fn assemble(p: &Behavior, k: usize) -> Result<(ConicProblem, SdpMeta), SdpError> {
    let scenario = p.scenario();
    let (n, _m) = (scenario.parties(), scenario.settings());
    if k < 1 || k > n {
        return Err(SdpError::BadK { k, parties: n });
    }
    let ctx = WordContext::new(scenario)?;
    let partitions = max_partitions(n, k);
    let np = partitions.len();
    let nc = ctx.n_classes;
    let side = ctx.side;
    let corr_len = scenario.corr_len();
    let coords = p.corr_coords();

    let n_vars = 1 + np * nc;
    let y_col = |pi: usize, class: u32| 1 + pi * nc + class as usize;

    // partial-transpose party masks per partition: one per unordered
    // bipartition of its blocks (first block fixed to one side)
    let pt_masks: Vec<Vec<u8>> = partitions
        .iter()
        .map(|blocks| {
            let nb = blocks.len();
            let mut masks = Vec::new();
            for sel in 1..(1usize << nb) {
                if sel & 1 == 0 || sel == (1 << nb) - 1 {
                    continue;
                }
                let mut mask = 0u8;
                for (bi, block) in blocks.iter().enumerate() {
                    if (sel >> bi) & 1 == 1 {
                        for &party in block {
                            mask |= 1 << party;
                        }
                    }
                }
                masks.push(mask);
            }
            masks
        })
        .collect();
    let psd_blocks: usize = pt_masks.iter().map(|ms| 1 + ms.len()).sum();

    let zero_rows = corr_len; // corr_len - 1 pinning rows + trace row
    let nonneg_rows = 2 + np;
    let mut triplets: Vec<(usize, usize, f64)> =
        Vec::with_capacity(psd_blocks * svec_len(side) + corr_len * (np + 1) + 2 * np + 4);
    let total_rows = zero_rows + nonneg_rows + psd_blocks * svec_len(side);
    let mut b = vec![0.0f64; total_rows];

    // pinning: sum_pi y_pi[class(c)] - T_c v = 0 for every c >= 1
    for c in 1..corr_len {
        let row = c - 1;
        let class = ctx.corr_class(scenario, c);
        for pi in 0..np {
            triplets.push((row, y_col(pi, class), 1.0));
        }
        triplets.push((row, 0, -coords[c]));
    }
    // trace: sum_pi y_pi[identity class] = 1
    let trace_row = corr_len - 1;
    for pi in 0..np {
        triplets.push((trace_row, y_col(pi, 0), 1.0));
    }
    b[trace_row] = 1.0;
    // nonneg: v >= 0, cap - v >= 0, y_pi[identity] >= 0
    let vpos_row = zero_rows;
    let cap_row = zero_rows + 1;
    triplets.push((vpos_row, 0, -1.0));
    triplets.push((cap_row, 0, 1.0));
    b[cap_row] = SDP_CAP;
    for pi in 0..np {
        triplets.push((zero_rows + 2 + pi, y_col(pi, 0), -1.0));
    }

    // moment matrix blocks: s_block = svec(Gamma) with Gamma entries read
    // through the class table, so coefficient is -w at the class column
    let sq2 = std::f64::consts::SQRT_2;
    let mut row = zero_rows + nonneg_rows;
    for (pi, masks) in pt_masks.iter().enumerate() {
        for mask in std::iter::once(0u8).chain(masks.iter().copied()) {
            for j in 0..side {
                for i in j..side {
                    let class = ctx.entry_class(i, j, mask);
                    let w = if i == j { 1.0 } else { sq2 };
                    triplets.push((row, y_col(pi, class), -w));
                    row += 1;
                }
            }
        }
    }
    debug_assert_eq!(row, total_rows);

    let a = SparseMat::from_triplets(total_rows, n_vars, &triplets)?;
    let mut c_obj = vec![0.0f64; n_vars];
    c_obj[0] = -1.0;
    let problem = ConicProblem {
        a,
        b,
        c: c_obj,
        cones: ConeSpec {
            zero: zero_rows,
            nonneg: nonneg_rows,
            psd: vec![side; psd_blocks],
        },
    };
    let meta = SdpMeta {
        n_classes: nc,
        n_partitions: np,
        side,
        psd_blocks,
        pinning_row_base: 0,
        trace_row,
        cap_row,
    };
    Ok((problem, meta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Capped,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    /// Certified visibility: max v with v P + (1 - v) P_white inside the
    /// relaxation (meaningful when status is Optimal).
    pub v_star: f64,
    pub status: SdpStatus,
    /// Duality gap reported by the solver at termination.
    pub gap: f64,
    /// |v_hat - v_star| where v_hat re-derives the optimum from the dual
    /// witness (pinning-row duals over the trace-row dual); None when the
    /// solve failed or the witness normalization degenerates.
    pub dual_check: Option<f64>,
    pub iters: usize,
}

/// Solve the native k-producibility visibility program, optionally warm
/// started from a previous solution of a structurally identical program.
pub fn solve_producibility(
    p: &Behavior,
    k: usize,
    warm: Option<&Solution>,
) -> Result<(SdpResult, Solution), SdpError> {
    let (problem, meta) = assemble(p, k)?;
    let settings = Settings {
        eps: SDP_GAP_TOL,
        max_iters: SDP_MAX_ITERS,
        ..Settings::default()
    };
    let sol = conic::solve(&problem, &settings, warm)?;
    let v_star = sol.x[0];
    let status = match sol.status {
        ConicStatus::IterLimit => SdpStatus::Failed,
        ConicStatus::Optimal if v_star >= SDP_CAP - 1e-6 => SdpStatus::Capped,
        ConicStatus::Optimal => SdpStatus::Optimal,
    };
    let dual_check = if status == SdpStatus::Optimal {
        // witness from duals: mu_c = -y[pinning c], bound nu = y[trace];
        // at an interior optimum sum_c mu_c T_c(P) = 1 and v* = nu
        let coords = p.corr_coords();
        let nu = sol.y[meta.trace_row];
        let denom: f64 = (1..p.scenario().corr_len())
            .map(|c| -sol.y[meta.pinning_row_base + c - 1] * coords[c])
            .sum();
        (denom.abs() > 1e-8).then(|| (nu / denom - v_star).abs())
    } else {
        None
    };
    Ok((
        SdpResult {
            v_star,
            status,
            gap: sol.gap,
            dual_check,
            iters: sol.iters,
        },
        sol,
    ))
}

/// Certified visibility of `p` against k-producible models in its own
/// scenario.
pub fn sdp_visibility(p: &Behavior, k: usize) -> Result<SdpResult, SdpError> {
    solve_producibility(p, k, None).map(|(r, _)| r)
}

/// Minimum certified visibility over all two-setting-per-party
/// restrictions of a three-setting behavior, with the minimizing
/// selection. A failed restriction poisons the whole lift: the minimum
/// over a set containing an unsolved program is not trustworthy.
pub fn lifted_sdp_visibility(p: &Behavior, k: usize) -> Result<(SdpResult, Selection), SdpError> {
    let selections = enumerate_selections(p.scenario());
    let mut best: Option<(SdpResult, Selection)> = None;
    let mut warm: Option<Solution> = None;
    for sel in selections {
        let sub = p.sub_behavior(&sel)?;
        let (res, sol) = solve_producibility(&sub, k, warm.as_ref())?;
        if res.status == SdpStatus::Failed {
            return Ok((res, sel));
        }
        warm = Some(sol);
        if best
            .as_ref()
            .is_none_or(|(b, _)| res.v_star < b.v_star)
        {
            best = Some((res, sel));
        }
    }
    Ok(best.expect("at least one selection"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Selection;
    use crate::lp::deterministic_vertices;
    use crate::qstate::{ghz_behavior, MeasurementSet};

    #[test]
    fn maximal_partition_counts() {
        assert_eq!(max_partitions(3, 2).len(), 3);
        assert_eq!(max_partitions(4, 3).len(), 7);
        assert_eq!(max_partitions(4, 2).len(), 3);
        assert_eq!(max_partitions(5, 2).len(), 15);
        for n in 2..=5 {
            assert_eq!(max_partitions(n, n).len(), 1);
            assert_eq!(max_partitions(n, 1).len(), 1);
        }
    }

    #[test]
    fn partitions_are_valid_and_maximal() {
        for (n, k) in [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)] {
            for blocks in max_partitions(n, k) {
                let mut seen = vec![false; n];
                for block in &blocks {
                    assert!(block.len() <= k);
                    for &p in block {
                        assert!(!seen[p as usize], "party repeated");
                        seen[p as usize] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s), "partition must cover all parties");
                for i in 0..blocks.len() {
                    for j in i + 1..blocks.len() {
                        assert!(blocks[i].len() + blocks[j].len() > k, "mergeable blocks");
                    }
                }
            }
        }
    }

    #[test]
    fn monomial_class_counts() {
        let cases = [(3, 2, 76), (3, 3, 532), (4, 3, 5128), (4, 2, 353), (5, 2, 1684)];
        for (n, m, expected) in cases {
            let ctx = WordContext::new(Scenario::new(n, m).unwrap()).unwrap();
            assert_eq!(ctx.n_classes, expected, "(n,m) = ({n},{m})");
        }
    }

    #[test]
    fn word_product_reversal_consistency() {
        let ctx = WordContext::new(Scenario::new(3, 3).unwrap()).unwrap();
        let m = ctx.m;
        // reversal of the product letter, reconstructed from the table:
        // rev(prod(a, b)) must be prod(b, a) for single-letter a, b
        for a in 0..=m {
            assert_eq!(ctx.prod[a * (m + 1) + a], 0, "observables square to 1");
            for b in 0..=m {
                let ab = ctx.prod[a * (m + 1) + b] as usize;
                assert!(ab < m * m + 1, "letter out of alphabet");
                for c in 0..=m {
                    for d in 0..=m {
                        // same letter from two generator pairs -> reversed
                        // products also coincide
                        if ctx.prod[c * (m + 1) + d] as usize == ab {
                            assert_eq!(
                                ctx.prod[d * (m + 1) + c],
                                ctx.prod[b * (m + 1) + a],
                                "reversal must be well-defined per letter"
                            );
                        }
                    }
                }
            }
        }
        // transposing the pair (u, v) = reversing the monomial
        for u in 0..ctx.side {
            for v in 0..ctx.side {
                assert_eq!(ctx.entry_class(u, v, 0), ctx.entry_class(v, u, 0));
            }
        }
    }

    #[test]
    fn assembled_program_dumps_and_parses() {
        let p = Behavior::white_noise(Scenario::new(3, 2).unwrap());
        let (prob, meta) = assemble(&p, 2).unwrap();
        assert_eq!(meta.side, 27);
        assert_eq!(meta.psd_blocks, 6);
        let text = prob.dump();
        let back = ConicProblem::parse(&text).unwrap();
        assert_eq!(back.a.n_rows(), prob.a.n_rows());
        assert_eq!(back.a.n_cols(), prob.a.n_cols());
        assert_eq!(back.cones, prob.cones);
    }

    #[test]
    fn white_noise_visibility_is_capped() {
        let p = Behavior::white_noise(Scenario::new(3, 2).unwrap());
        let res = sdp_visibility(&p, 2).unwrap();
        assert_eq!(res.status, SdpStatus::Capped, "v* = {}", res.v_star);
    }

    #[test]
    fn deterministic_vertex_stays_inside() {
        let sc = Scenario::new(3, 2).unwrap();
        let verts = deterministic_vertices(sc).unwrap();
        let res = sdp_visibility(&verts.behavior(5), 2).unwrap();
        assert!(
            res.v_star >= 1.0 - 1e-4,
            "local behavior certified nonlocal: v* = {}",
            res.v_star
        );
    }

    #[test]
    fn ghz_pauli_two_producible_visibility_is_inverse_sqrt2() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        let sub = p.sub_behavior(&Selection::identity(3)).unwrap();
        let res = sdp_visibility(&sub, 2).unwrap();
        assert_eq!(res.status, SdpStatus::Optimal);
        let target = std::f64::consts::FRAC_1_SQRT_2;
        assert!(
            (res.v_star - target).abs() < 1e-3,
            "v* = {} vs {target}",
            res.v_star
        );
        let check = res.dual_check.expect("dual witness available");
        assert!(check <= 1e-5, "dual witness check {check}");
    }

    #[test]
    fn relaxation_loosens_with_k() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        let sub = p.sub_behavior(&Selection::identity(3)).unwrap();
        let v2 = sdp_visibility(&sub, 2).unwrap();
        let v3 = sdp_visibility(&sub, 3).unwrap();
        assert!(v3.v_star >= v2.v_star - 1e-5, "{} < {}", v3.v_star, v2.v_star);
        // the full-quantum relaxation contains the quantum behavior itself
        assert!(v3.v_star >= 1.0 - 1e-4);
    }

    #[test]
    fn lifted_visibility_on_pauli_triads() {
        let p = ghz_behavior(&MeasurementSet::pauli_triads(3), 1.0);
        let (res, sel) = lifted_sdp_visibility(&p, 2).unwrap();
        assert_eq!(res.status, SdpStatus::Optimal);
        // the X/Y plane restriction is the most sensitive one
        assert_eq!(sel, Selection::identity(3));
        assert!((res.v_star - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        // native on the restriction can never exceed the lifted minimum
        let sub = p.sub_behavior(&sel).unwrap();
        let native = sdp_visibility(&sub, 2).unwrap();
        assert!(native.v_star <= res.v_star + 1e-6);
    }
}
