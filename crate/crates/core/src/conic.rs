//! First-order conic solver for the membership programs.
//!
//! Problems are given in the standard form
//!
//!   minimize c'x  subject to  Ax + s = b,  s in K,
//!
//! where K is a product of a zero cone, a nonnegative orthant, and PSD
//! cones in scaled-vector (svec) coordinates, laid out in that row order.
//! The solver is an ADMM splitting with over-relaxation, diagonal (Ruiz)
//! equilibration, adaptive penalty, and safeguarded Anderson acceleration.
//! The x-update exploits the shape of the assembled membership problems:
//! rows with a single structural nonzero fold into a diagonal, so the
//! normal matrix is diagonal-plus-low-rank and solves in O(nnz) after a
//! small dense Cholesky factorization (Woodbury identity).

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("invalid conic problem: {0}")]
    Invalid(String),
    #[error("conic parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Cone layout of the slack vector: `zero` equality rows, then `nonneg`
/// inequality rows, then one svec block per PSD side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSpec {
    pub zero: usize,
    pub nonneg: usize,
    pub psd: Vec<usize>,
}

impl ConeSpec {
    pub fn total_rows(&self) -> usize {
        self.zero + self.nonneg + self.psd.iter().map(|&d| svec_len(d)).sum::<usize>()
    }
}

/// Length of the scaled lower-triangle vectorization of a side-d matrix.
pub const fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Pack the lower triangle of a column-major side-d symmetric matrix,
/// off-diagonal entries scaled by sqrt(2) so that inner products match.
pub fn svec_pack(mat: &[f64], d: usize, out: &mut [f64]) {
    let mut k = 0;
    for j in 0..d {
        out[k] = mat[j * d + j];
        k += 1;
        for i in j + 1..d {
            out[k] = SQRT2 * mat[j * d + i];
            k += 1;
        }
    }
}

/// Inverse of [`svec_pack`]; fills both triangles.
pub fn svec_unpack(v: &[f64], d: usize, mat: &mut [f64]) {
    let mut k = 0;
    for j in 0..d {
        mat[j * d + j] = v[k];
        k += 1;
        for i in j + 1..d {
            let x = v[k] / SQRT2;
            mat[j * d + i] = x;
            mat[i * d + j] = x;
            k += 1;
        }
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone)]
pub struct SparseMat {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseMat {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, ConicError> {
        let mut counts = vec![0usize; n_cols + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(ConicError::Invalid(format!(
                    "triplet ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
            counts[c + 1] += 1;
        }
        for j in 0..n_cols {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n_cols];
        let mut row_idx = vec![0u32; nnz];
        let mut vals = vec![0.0f64; nnz];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let k = cursor[c];
            row_idx[k] = r as u32;
            vals[k] = v;
            cursor[c] += 1;
        }
        // sort rows within each column and merge duplicates
        let mut col_ptr = vec![0usize; n_cols + 1];
        let mut w = 0usize;
        for j in 0..n_cols {
            let (lo, hi) = (counts[j], counts[j + 1]);
            let mut entries: Vec<(u32, f64)> =
                (lo..hi).map(|k| (row_idx[k], vals[k])).collect();
            entries.sort_unstable_by_key(|e| e.0);
            col_ptr[j] = w;
            let mut it = entries.into_iter().peekable();
            while let Some((r, mut v)) = it.next() {
                while it.peek().is_some_and(|&(r2, _)| r2 == r) {
                    v += it.next().unwrap().1;
                }
                row_idx[w] = r;
                vals[w] = v;
                w += 1;
            }
        }
        col_ptr[n_cols] = w;
        row_idx.truncate(w);
        vals.truncate(w);
        Ok(Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            vals,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// out = A x
    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj != 0.0 {
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    out[self.row_idx[k] as usize] += self.vals[k] * xj;
                }
            }
        }
    }

    /// out = A' r
    pub fn mul_t(&self, r: &[f64], out: &mut [f64]) {
        for j in 0..self.n_cols {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.vals[k] * r[self.row_idx[k] as usize];
            }
            out[j] = acc;
        }
    }

    fn iter_col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.col_ptr[j]..self.col_ptr[j + 1]).map(|k| (self.row_idx[k] as usize, self.vals[k]))
    }
}

/// A conic program in standard form.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub a: SparseMat,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub cones: ConeSpec,
}

impl ConicProblem {
    pub fn validate(&self) -> Result<(), ConicError> {
        if self.a.n_rows() != self.cones.total_rows() {
            return Err(ConicError::Invalid(format!(
                "A has {} rows, cones describe {}",
                self.a.n_rows(),
                self.cones.total_rows()
            )));
        }
        if self.b.len() != self.a.n_rows() || self.c.len() != self.a.n_cols() {
            return Err(ConicError::Invalid("b/c length mismatch".into()));
        }
        Ok(())
    }

    /// Self-describing text serialization (sparse triplets) so external
    /// solvers can cross-validate the exact program.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "conic-problem v1");
        let _ = writeln!(s, "vars {} rows {}", self.a.n_cols(), self.a.n_rows());
        let mut cones = format!("cones zero {} nonneg {}", self.cones.zero, self.cones.nonneg);
        for d in &self.cones.psd {
            let _ = write!(cones, " psd {d}");
        }
        let _ = writeln!(s, "{cones}");
        for (j, &v) in self.c.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(s, "c {j} {v:.17e}");
            }
        }
        for (r, &v) in self.b.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(s, "b {r} {v:.17e}");
            }
        }
        for j in 0..self.a.n_cols() {
            for (r, v) in self.a.iter_col(j) {
                let _ = writeln!(s, "a {r} {j} {v:.17e}");
            }
        }
        let _ = writeln!(s, "end");
        s
    }

    /// Parse the [`dump`](Self::dump) format back; rejects unknown lines.
    pub fn parse(text: &str) -> Result<Self, ConicError> {
        let err = |line: usize, msg: &str| ConicError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if header.trim() != "conic-problem v1" {
            return Err(err(ln + 1, "bad header"));
        }
        let mut n_vars = None;
        let mut n_rows = None;
        let mut cones = None;
        let mut c: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut ended = false;
        for (ln, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if ended {
                return Err(err(ln + 1, "content after end"));
            }
            let mut tok = line.split_whitespace();
            match tok.next().unwrap() {
                "vars" => {
                    let nv: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad vars"))?;
                    if tok.next() != Some("rows") {
                        return Err(err(ln + 1, "expected rows"));
                    }
                    let nr: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad rows"))?;
                    n_vars = Some(nv);
                    n_rows = Some(nr);
                    c = vec![0.0; nv];
                    b = vec![0.0; nr];
                }
                "cones" => {
                    let mut spec = ConeSpec {
                        zero: 0,
                        nonneg: 0,
                        psd: Vec::new(),
                    };
                    let toks: Vec<&str> = tok.collect();
                    let mut i = 0;
                    while i < toks.len() {
                        let kind = toks[i];
                        let val: usize = toks
                            .get(i + 1)
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| err(ln + 1, "bad cone count"))?;
                        match kind {
                            "zero" => spec.zero = val,
                            "nonneg" => spec.nonneg = val,
                            "psd" => spec.psd.push(val),
                            _ => return Err(err(ln + 1, "unknown cone kind")),
                        }
                        i += 2;
                    }
                    cones = Some(spec);
                }
                "c" => {
                    let j: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad c index"))?;
                    let v: f64 = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad c value"))?;
                    *c.get_mut(j).ok_or_else(|| err(ln + 1, "c index range"))? = v;
                }
                "b" => {
                    let r: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad b index"))?;
                    let v: f64 = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad b value"))?;
                    *b.get_mut(r).ok_or_else(|| err(ln + 1, "b index range"))? = v;
                }
                "a" => {
                    let r: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad a row"))?;
                    let j: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad a col"))?;
                    let v: f64 = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln + 1, "bad a value"))?;
                    trips.push((r, j, v));
                }
                "end" => ended = true,
                other => return Err(err(ln + 1, &format!("unknown field {other}"))),
            }
        }
        if !ended {
            return Err(err(0, "missing end marker"));
        }
        let (n_vars, n_rows, cones) = match (n_vars, n_rows, cones) {
            (Some(v), Some(r), Some(k)) => (v, r, k),
            _ => return Err(err(0, "missing vars/cones header")),
        };
        let a = SparseMat::from_triplets(n_rows, n_vars, &trips)?;
        let p = ConicProblem { a, b, c, cones };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    /// Convergence tolerance on primal/dual residuals and gap (relative).
    pub eps: f64,
    pub max_iters: usize,
    /// Over-relaxation parameter in (1, 2).
    pub alpha: f64,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Anderson acceleration memory; 0 disables.
    pub accel_memory: usize,
    /// Print residuals at every convergence check to stderr.
    pub trace: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_iters: 10_000,
            alpha: 1.6,
            rho: 1.0,
            adaptive_rho: true,
            accel_memory: 16,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    IterLimit,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub pres: f64,
    pub dres: f64,
    pub iters: usize,
    pub status: ConicStatus,
}

/// Diagonal equilibration scales: A_hat = E A F (rows, cols).
struct Scaling {
    e: Vec<f64>,
    f: Vec<f64>,
}

/// Ruiz equilibration; PSD-block rows share one scale to preserve the
/// cone geometry under row scaling.
fn equilibrate(a: &SparseMat, cones: &ConeSpec) -> Scaling {
    let (n_rows, n_cols) = (a.n_rows(), a.n_cols());
    let mut e = vec![1.0f64; n_rows];
    let mut f = vec![1.0f64; n_cols];
    // block id per row: usize::MAX for individually scaled rows
    let mut block_of = vec![usize::MAX; n_rows];
    let mut r0 = cones.zero + cones.nonneg;
    for (bi, &d) in cones.psd.iter().enumerate() {
        for r in r0..r0 + svec_len(d) {
            block_of[r] = bi;
        }
        r0 += svec_len(d);
    }
    for _ in 0..10 {
        let mut row_max = vec![0.0f64; n_rows];
        let mut col_max = vec![0.0f64; n_cols];
        for j in 0..n_cols {
            for (r, v) in a.iter_col(j) {
                let m = (v * e[r] * f[j]).abs();
                row_max[r] = row_max[r].max(m);
                col_max[j] = col_max[j].max(m);
            }
        }
        let mut block_max = vec![0.0f64; cones.psd.len()];
        for r in 0..n_rows {
            if block_of[r] != usize::MAX {
                block_max[block_of[r]] = block_max[block_of[r]].max(row_max[r]);
            }
        }
        for r in 0..n_rows {
            let m = if block_of[r] == usize::MAX {
                row_max[r]
            } else {
                block_max[block_of[r]]
            };
            if m > 0.0 {
                e[r] /= m.sqrt();
            }
        }
        for j in 0..n_cols {
            if col_max[j] > 0.0 {
                f[j] /= col_max[j].sqrt();
            }
        }
    }
    Scaling { e, f }
}

/// Solver for (sigma I + rho A'A) x = rhs via the Woodbury identity:
/// rows with one structural nonzero contribute a diagonal, the remaining
/// "coupling" rows a low-rank correction handled by a dense Cholesky.
struct NormalSolver {
    diag: Vec<f64>,
    coupling: Vec<Vec<(u32, f64)>>,
    /// Cholesky factor of (I/rho + U D^{-1} U'), packed lower, row-major.
    chol: Vec<f64>,
    n_u: usize,
    scratch_u: Vec<f64>,
    scratch_n: Vec<f64>,
}

impl NormalSolver {
    fn new(a: &SparseMat, e: &[f64], f: &[f64], sigma: f64, rho: f64) -> Self {
        let n_cols = a.n_cols();
        let mut row_nnz = vec![0u32; a.n_rows()];
        for j in 0..n_cols {
            for (r, _) in a.iter_col(j) {
                row_nnz[r] += 1;
            }
        }
        let mut diag = vec![sigma; n_cols];
        let mut by_row: HashMap<usize, Vec<(u32, f64)>> = HashMap::new();
        for j in 0..n_cols {
            for (r, v) in a.iter_col(j) {
                let sv = v * e[r] * f[j];
                if row_nnz[r] <= 1 {
                    diag[j] += rho * sv * sv;
                } else {
                    by_row.entry(r).or_default().push((j as u32, sv));
                }
            }
        }
        let mut rows: Vec<usize> = by_row.keys().copied().collect();
        rows.sort_unstable();
        let coupling: Vec<Vec<(u32, f64)>> = rows.iter().map(|r| by_row[r].clone()).collect();
        let n_u = coupling.len();

        // H = I/rho + U D^{-1} U'
        let mut h = vec![0.0f64; n_u * n_u];
        // column -> list of (coupling row, value)
        let mut col_entries: HashMap<u32, Vec<(usize, f64)>> = HashMap::new();
        for (p, row) in coupling.iter().enumerate() {
            for &(j, v) in row {
                col_entries.entry(j).or_default().push((p, v));
            }
        }
        for (j, ents) in &col_entries {
            let dj = diag[*j as usize];
            for &(p, vp) in ents {
                for &(q, vq) in ents {
                    if q <= p {
                        h[p * n_u + q] += vp * vq / dj;
                    }
                }
            }
        }
        for p in 0..n_u {
            h[p * n_u + p] += 1.0 / rho;
        }
        cholesky_lower(&mut h, n_u);
        Self {
            diag,
            coupling,
            chol: h,
            n_u,
            scratch_u: vec![0.0; n_u],
            scratch_n: vec![0.0; n_cols],
        }
    }

    /// x = (sigma I + rho A'A)^{-1} r, overwriting r.
    fn solve(&mut self, r: &mut [f64]) {
        let t = &mut self.scratch_n;
        for (ti, (ri, di)) in t.iter_mut().zip(r.iter().zip(&self.diag)) {
            *ti = ri / di;
        }
        if self.n_u > 0 {
            let g = &mut self.scratch_u;
            for (p, row) in self.coupling.iter().enumerate() {
                g[p] = row.iter().map(|&(j, v)| v * t[j as usize]).sum();
            }
            chol_solve(&self.chol, self.n_u, g);
            // t -= D^{-1} U' g
            for (p, row) in self.coupling.iter().enumerate() {
                let gp = g[p];
                for &(j, v) in row {
                    t[j as usize] -= v * gp / self.diag[j as usize];
                }
            }
        }
        r.copy_from_slice(t);
    }
}

/// In-place dense Cholesky (lower, row-major), with a tiny diagonal
/// safeguard against loss of positive definiteness from roundoff.
fn cholesky_lower(m: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum -= m[i * n + k] * m[j * n + k];
            }
            if i == j {
                m[i * n + i] = sum.max(1e-14).sqrt();
            } else {
                m[i * n + j] = sum / m[j * n + j];
            }
        }
        for j in i + 1..n {
            m[i * n + j] = 0.0;
        }
    }
}

fn chol_solve(l: &[f64], n: usize, r: &mut [f64]) {
    for i in 0..n {
        let mut sum = r[i];
        for k in 0..i {
            sum -= l[i * n + k] * r[k];
        }
        r[i] = sum / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = r[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * r[k];
        }
        r[i] = sum / l[i * n + i];
    }
}

/// Project the slack vector onto K in place (scaled coordinates). With
/// `exact` unset, large PSD blocks may use the tracked-subspace fast
/// path; iterates used for convergence decisions must pass `exact`.
fn project_cone(q: &mut [f64], cones: &ConeSpec, eig: &mut eig::Engine, exact: bool) {
    let mut r = 0;
    q[r..r + cones.zero].fill(0.0);
    r += cones.zero;
    for v in &mut q[r..r + cones.nonneg] {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    r += cones.nonneg;
    for (idx, &d) in cones.psd.iter().enumerate() {
        let len = svec_len(d);
        eig.project_psd(idx, &mut q[r..r + len], d, exact);
        r += len;
    }
}

pub fn solve(
    problem: &ConicProblem,
    settings: &Settings,
    warm: Option<&Solution>,
) -> Result<Solution, ConicError> {
    problem.validate()?;
    let a = &problem.a;
    let (n_rows, n_cols) = (a.n_rows(), a.n_cols());
    let cones = &problem.cones;
    let sc = equilibrate(a, cones);
    let sigma = 1e-6;
    let mut rho = settings.rho;
    let mut normal = NormalSolver::new(a, &sc.e, &sc.f, sigma, rho);
    let mut eig = eig::Engine::new(&cones.psd);

    // equilibrated data, then normalized so rhs and objective are O(1);
    // without this the relative primal and dual residuals live on
    // incomparable scales and the penalty adaptation chases its tail
    let bh: Vec<f64> = problem.b.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
    let ch: Vec<f64> = problem.c.iter().zip(&sc.f).map(|(v, f)| v * f).collect();
    let kb = norm2(&bh).clamp(1e-4, 1e6);
    let kc = norm2(&ch).clamp(1e-4, 1e6);
    let bn: Vec<f64> = bh.iter().map(|v| v / kb).collect();
    let cn: Vec<f64> = ch.iter().map(|v| v / kc).collect();
    let norm_b = norm2(&problem.b);
    let norm_c = norm2(&problem.c);

    let mut x = vec![0.0f64; n_cols];
    let mut s = bn.clone();
    let mut eta = vec![0.0f64; n_rows];
    if let Some(w) = warm {
        for (xi, (wx, f)) in x.iter_mut().zip(w.x.iter().zip(&sc.f)) {
            *xi = wx / (f * kb);
        }
        for (si, (ws, e)) in s.iter_mut().zip(w.s.iter().zip(&sc.e)) {
            *si = ws * e / kb;
        }
        for (hi, (wy, e)) in eta.iter_mut().zip(w.y.iter().zip(&sc.e)) {
            *hi = wy / (e * rho * kc);
        }
    }

    let mut ax = vec![0.0f64; n_rows];
    let mut rhs = vec![0.0f64; n_cols];
    let mut row_buf = vec![0.0f64; n_rows];
    let mut aa = Accel::new(settings.accel_memory, n_cols + 2 * n_rows);
    let mut last_check = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let spmul = |x: &[f64], out: &mut [f64]| {
        // A_hat x = E A F x
        let mut t = vec![0.0; x.len()];
        for (ti, (xi, f)) in t.iter_mut().zip(x.iter().zip(&sc.f)) {
            *ti = xi * f;
        }
        a.mul(&t, out);
        for (o, e) in out.iter_mut().zip(&sc.e) {
            *o *= e;
        }
    };
    let spmul_t = |r: &[f64], out: &mut [f64]| {
        let mut t = vec![0.0; r.len()];
        for (ti, (ri, e)) in t.iter_mut().zip(r.iter().zip(&sc.e)) {
            *ti = ri * e;
        }
        a.mul_t(&t, out);
        for (o, f) in out.iter_mut().zip(&sc.f) {
            *o *= f;
        }
    };

    let mut iters = settings.max_iters;
    let mut status = ConicStatus::IterLimit;
    for it in 0..settings.max_iters {
        // x-step: (sigma I + rho A'A) x = sigma x - c + rho A'(b - s - eta)
        for (rb, ((bv, sv), ev)) in row_buf.iter_mut().zip(bn.iter().zip(&s).zip(&eta)) {
            *rb = bv - sv - ev;
        }
        spmul_t(&row_buf, &mut rhs);
        for (rv, (xv, cv)) in rhs.iter_mut().zip(x.iter().zip(&cn)) {
            *rv = sigma * xv - cv + rho * *rv;
        }
        normal.solve(&mut rhs);
        x.copy_from_slice(&rhs);

        spmul(&x, &mut ax);
        // over-relaxation: z = alpha Ax + (1 - alpha)(b - s_prev)
        let alpha = settings.alpha;
        for (r, (((axv, bv), sv), ev)) in row_buf
            .iter_mut()
            .zip(ax.iter().zip(&bn).zip(&s).zip(&eta))
        {
            let z = alpha * axv + (1.0 - alpha) * (bv - sv);
            *r = bv - z - ev;
        }
        let check_now = it % 25 == 24 || it + 1 == settings.max_iters;
        let mut q = row_buf.clone();
        project_cone(&mut q, cones, &mut eig, check_now);
        // eta += z + s_new - b, i.e. eta_new = s_new - (b - z - eta_old)
        for ((ev, sv), qp) in eta.iter_mut().zip(q.iter()).zip(&row_buf) {
            *ev = sv - qp;
        }
        s.copy_from_slice(&q);

        // Anderson acceleration over the joint state (x, s, eta); check
        // iterations keep the plain projected iterate so the reported
        // slack is an exact cone member
        if settings.accel_memory > 0 {
            aa.push_and_accelerate(&mut x, &mut s, &mut eta, it, !check_now);
        }

        // convergence check, in the units of the original problem
        if check_now {
            spmul(&x, &mut ax);
            let mut pres_num = 0.0f64;
            let mut ax_norm = 0.0f64;
            let mut s_norm = 0.0f64;
            for r in 0..n_rows {
                let u = kb / sc.e[r];
                let resid = (ax[r] + s[r] - bn[r]) * u;
                pres_num += resid * resid;
                let axu = ax[r] * u;
                ax_norm += axu * axu;
                let su = s[r] * u;
                s_norm += su * su;
            }
            let pres = pres_num.sqrt()
                / (1.0 + ax_norm.sqrt().max(s_norm.sqrt()).max(norm_b));
            // dual residual: ||A'y + c|| with y = rho kc E eta
            let y_scaled: Vec<f64> = eta.iter().map(|v| v * rho).collect();
            let mut aty = vec![0.0; n_cols];
            spmul_t(&y_scaled, &mut aty);
            let mut dres_num = 0.0f64;
            for j in 0..n_cols {
                let v = (aty[j] + cn[j]) * kc / sc.f[j];
                dres_num += v * v;
            }
            let dres = dres_num.sqrt() / (1.0 + norm_c);
            let pobj: f64 = kb * kc * cn.iter().zip(&x).map(|(c, x)| c * x).sum::<f64>();
            let dobj: f64 =
                -kb * kc * rho * bn.iter().zip(&eta).map(|(b, e)| b * e).sum::<f64>();
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            last_check = (pres, dres, gap);
            if settings.trace {
                eprintln!(
                    "it {it:>6}  pres {pres:.3e}  dres {dres:.3e}  gap {gap:.3e}  rho {rho:.3e}  pobj {pobj:.8}  trk {}/{}",
                    eig.fast_hits, eig.fast_calls
                );
            }
            if pres < settings.eps && dres < settings.eps && gap < settings.eps {
                status = ConicStatus::Optimal;
                iters = it + 1;
                break;
            }
            // adaptive penalty: steer rho toward balanced residuals; the
            // sqrt step with a dead band settles after a few corrections
            if settings.adaptive_rho && it % 100 == 99 {
                let ratio = pres / dres.max(1e-300);
                if !(0.5..=2.0).contains(&ratio) {
                    let factor = ratio.sqrt().clamp(1.0 / 3.0, 3.0);
                    let next = (rho * factor).clamp(1e-4, 1e4);
                    if next != rho {
                        for ev in eta.iter_mut() {
                            *ev *= rho / next;
                        }
                        rho = next;
                        normal = NormalSolver::new(a, &sc.e, &sc.f, sigma, rho);
                        aa.reset();
                    }
                }
            }
        }
    }

    // unscale
    let x_out: Vec<f64> = x.iter().zip(&sc.f).map(|(v, f)| v * f * kb).collect();
    let s_out: Vec<f64> = s.iter().zip(&sc.e).map(|(v, e)| v * kb / e).collect();
    let y_out: Vec<f64> = eta
        .iter()
        .zip(&sc.e)
        .map(|(v, e)| v * e * rho * kc)
        .collect();
    let pobj: f64 = problem.c.iter().zip(&x_out).map(|(c, x)| c * x).sum();
    let dobj: f64 = -problem.b.iter().zip(&y_out).map(|(b, y)| b * y).sum::<f64>();
    Ok(Solution {
        x: x_out,
        y: y_out,
        s: s_out,
        primal_obj: pobj,
        dual_obj: dobj,
        gap: last_check.2,
        pres: last_check.0,
        dres: last_check.1,
        iters,
        status,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Safeguarded type-II Anderson acceleration over the ADMM state.
///
/// The fixed-point residual at the current state is compared against the
/// smallest residual seen recently; extrapolations that blow it up are
/// rolled back to the last plain iterate (safe: the plain map is
/// nonexpansive) and the history is flushed. Coefficients are also
/// norm-capped so a near-singular least-squares system cannot catapult
/// the state.
///
/// History columns and their Gram matrix are maintained incrementally,
/// so one call costs O(dim * memory) regardless of memory depth.
struct Accel {
    mem: usize,
    dim: usize,
    /// residual-difference columns dg_i = g_{i+1} - g_i, oldest first
    dg_cols: std::collections::VecDeque<Vec<f64>>,
    /// combined update columns u_i = dz_i + dg_i used in extrapolation
    u_cols: std::collections::VecDeque<Vec<f64>>,
    /// Gram of dg columns, row-major with stride `mem`, logical size m*m
    gram: Vec<f64>,
    z_prev: Vec<f64>,
    z_prev_old: Vec<f64>,
    g_prev: Vec<f64>,
    plain_next: Vec<f64>,
    have_prev: bool,
    have_g_prev: bool,
    recent_g: std::collections::VecDeque<f64>,
    cooldown: usize,
}

const AA_REJECT_FACTOR: f64 = 3.0;
const AA_THETA_CAP: f64 = 1e3;
const AA_WINDOW: usize = 10;

impl Accel {
    fn new(mem: usize, dim: usize) -> Self {
        let vlen = if mem > 0 { dim } else { 0 };
        Self {
            mem,
            dim,
            dg_cols: std::collections::VecDeque::new(),
            u_cols: std::collections::VecDeque::new(),
            gram: vec![0.0; mem * mem],
            z_prev: vec![0.0; vlen],
            z_prev_old: vec![0.0; vlen],
            g_prev: vec![0.0; vlen],
            plain_next: vec![0.0; vlen],
            have_prev: false,
            have_g_prev: false,
            recent_g: std::collections::VecDeque::new(),
            cooldown: 0,
        }
    }

    fn reset(&mut self) {
        self.dg_cols.clear();
        self.u_cols.clear();
        self.have_prev = false;
        self.have_g_prev = false;
        self.recent_g.clear();
        self.cooldown = 0;
    }

    fn note_g(&mut self, g_norm: f64) {
        self.recent_g.push_back(g_norm);
        if self.recent_g.len() > AA_WINDOW {
            self.recent_g.pop_front();
        }
    }

    fn ref_g(&self) -> f64 {
        self.recent_g.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Append the newest residual-difference column and its Gram row,
    /// evicting the oldest column when over capacity.
    fn push_cols(&mut self, dg: Vec<f64>, u: Vec<f64>) {
        if self.dg_cols.len() == self.mem {
            self.dg_cols.pop_front();
            self.u_cols.pop_front();
            let m = self.mem;
            for i in 1..m {
                for j in 1..m {
                    self.gram[(i - 1) * m + (j - 1)] = self.gram[i * m + j];
                }
            }
        }
        self.dg_cols.push_back(dg);
        self.u_cols.push_back(u);
        let m = self.dg_cols.len();
        let new = &self.dg_cols[m - 1];
        for j in 0..m {
            let dot: f64 = new.iter().zip(&self.dg_cols[j]).map(|(a, b)| a * b).sum();
            self.gram[(m - 1) * self.mem + j] = dot;
            self.gram[j * self.mem + (m - 1)] = dot;
        }
    }

    /// Given the state after a plain ADMM step (the fixed-point map output
    /// for the previous state), optionally replace it by an extrapolated
    /// state. Rejection restores the last plain step and clears history.
    /// With `extrapolate` unset the history is advanced but the plain
    /// iterate is kept.
    fn push_and_accelerate(
        &mut self,
        x: &mut [f64],
        s: &mut [f64],
        eta: &mut [f64],
        it: usize,
        extrapolate: bool,
    ) {
        if self.mem == 0 || it < 20 {
            return;
        }
        let nx = x.len();
        let ns = s.len();
        let mut z_new = vec![0.0; self.dim];
        z_new[..nx].copy_from_slice(x);
        z_new[nx..nx + ns].copy_from_slice(s);
        z_new[nx + ns..].copy_from_slice(eta);

        if !self.have_prev {
            self.z_prev.copy_from_slice(&z_new);
            self.have_prev = true;
            return;
        }
        // residual of the previous state under the map
        let g: Vec<f64> = z_new
            .iter()
            .zip(&self.z_prev)
            .map(|(a, b)| a - b)
            .collect();
        let g_norm = norm2(&g);
        if self.cooldown > 0 {
            self.cooldown -= 1;
            self.step_plain(&z_new, g);
            self.note_g(g_norm);
            return;
        }
        if (!g_norm.is_finite() || g_norm > AA_REJECT_FACTOR * self.ref_g())
            && !self.u_cols.is_empty()
        {
            // extrapolation made things worse: restore the plain iterate
            let (px, rest) = self.plain_next.split_at(nx);
            let (ps, pe) = rest.split_at(ns);
            x.copy_from_slice(px);
            s.copy_from_slice(ps);
            eta.copy_from_slice(pe);
            let plain = std::mem::take(&mut self.plain_next);
            self.reset();
            self.z_prev.copy_from_slice(&plain);
            self.plain_next = plain;
            self.have_prev = true;
            self.cooldown = 10;
            return;
        }
        self.plain_next.copy_from_slice(&z_new);
        self.note_g(g_norm);
        if self.have_g_prev {
            let dg: Vec<f64> = g.iter().zip(&self.g_prev).map(|(a, b)| a - b).collect();
            let u: Vec<f64> = self
                .z_prev
                .iter()
                .zip(&self.z_prev_old)
                .zip(&dg)
                .map(|((z1, z0), d)| z1 - z0 + d)
                .collect();
            self.push_cols(dg, u);
        }
        let m = self.dg_cols.len();
        if m == 0 || !extrapolate {
            self.step_plain(&z_new, g);
            return;
        }
        // least squares over residual differences
        let mut gram = vec![0.0f64; m * m];
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] = self.gram[i * self.mem + j];
            }
        }
        let trace: f64 = (0..m).map(|i| gram[i * m + i]).sum();
        let reg = 1e-8 * trace + 1e-12;
        for i in 0..m {
            gram[i * m + i] += reg;
        }
        let mut theta = vec![0.0f64; m];
        for (i, col) in self.dg_cols.iter().enumerate() {
            theta[i] = col.iter().zip(&g).map(|(a, b)| a * b).sum();
        }
        cholesky_lower(&mut gram, m);
        chol_solve(&gram, m, &mut theta);
        let theta_norm = norm2(&theta);
        if !theta_norm.is_finite() || theta_norm > AA_THETA_CAP {
            // ill-conditioned history: skip extrapolation this step
            self.step_plain(&z_new, g);
            return;
        }
        // extrapolated state: z_new - sum_i theta_i u_i
        let mut z_acc = z_new;
        for (i, col) in self.u_cols.iter().enumerate() {
            let th = theta[i];
            if th != 0.0 {
                for (za, ui) in z_acc.iter_mut().zip(col) {
                    *za -= th * ui;
                }
            }
        }
        x.copy_from_slice(&z_acc[..nx]);
        s.copy_from_slice(&z_acc[nx..nx + ns]);
        eta.copy_from_slice(&z_acc[nx + ns..]);
        std::mem::swap(&mut self.z_prev, &mut self.z_prev_old);
        self.z_prev.copy_from_slice(&z_acc);
        self.g_prev = g;
        self.have_g_prev = true;
    }

    /// Advance bookkeeping when the plain iterate is kept as-is.
    fn step_plain(&mut self, z_new: &[f64], g: Vec<f64>) {
        std::mem::swap(&mut self.z_prev, &mut self.z_prev_old);
        self.z_prev.copy_from_slice(z_new);
        self.g_prev = g;
        self.have_g_prev = true;
    }
}

/// Construct a projection engine directly; used by benchmarks.
#[doc(hidden)]
pub fn test_engine(sides: &[usize]) -> eig::Engine {
    eig::Engine::new(sides)
}

/// Symmetric eigendecomposition backend for PSD projections: LAPACK's
/// divide-and-conquer routine when the `system-lapack` feature is on, a
/// pure-Rust path otherwise.
///
/// Large blocks additionally keep a tracked eigenspace between exact
/// projections: ADMM slack inputs drift slowly, so the smaller of the
/// positive/negative eigenspaces (plus a cushion of near-zero
/// directions from the other side) is re-used as a starting subspace.
/// One shifted power step plus Rayleigh-Ritz refreshes it; strict Ritz
/// residual and cushion checks demote any questionable call to the
/// exact path, and callers force exactness on every iterate that a
/// convergence decision reads.
pub(crate) mod eig {
    use super::svec_len;

    /// Minimum block side for subspace tracking; smaller eigensolves are
    /// cheap enough to run exactly every time.
    const TRACK_MIN_SIDE: usize = 128;
    /// Cushion of opposite-sign directions kept around zero so that
    /// eigenvalues crossing the boundary stay inside the subspace.
    #[cfg(feature = "system-lapack")]
    const TRACK_PAD: usize = 8;
    /// Absolute Ritz residual floor, relative to the spectral scale.
    #[cfg(feature = "system-lapack")]
    const TRACK_RES_TOL: f64 = 1e-7;
    /// Ritz residuals may additionally grow with the input drift since
    /// the previous call: a projection error proportional to the step
    /// keeps the relative-error inexact splitting convergent, and the
    /// tolerance tightens automatically as the iteration stalls out.
    #[cfg(feature = "system-lapack")]
    const TRACK_DRIFT_FRAC: f64 = 0.3;
    /// Inputs moving faster than this fraction of the spectral scale
    /// per call always take the exact path.
    #[cfg(feature = "system-lapack")]
    const TRACK_MAX_DRIFT: f64 = 0.01;

    pub struct Engine {
        per_side: Vec<Workspace>,
        sides: Vec<usize>,
        blocks: Vec<(usize, BlockState)>,
        /// tracked-path hit/attempt counts, reported by the solver trace
        pub(crate) fast_hits: u64,
        pub(crate) fast_calls: u64,
    }

    /// Tracked eigenspace of one PSD block between exact projections.
    #[cfg_attr(not(feature = "system-lapack"), allow(dead_code))]
    struct BlockState {
        valid: bool,
        /// true: the negative eigenspace is tracked (projection adds
        /// back its mirror); false: the positive one (projection is
        /// rebuilt from it).
        track_neg: bool,
        r: usize,
        v: Vec<f64>,
        /// spectral scale max |lambda| from the last exact pass
        scale: f64,
        /// svec snapshot of the previous input, for drift measurement
        prev: Vec<f64>,
    }

    impl BlockState {
        fn new() -> Self {
            Self {
                valid: false,
                track_neg: true,
                r: 0,
                v: Vec::new(),
                scale: 0.0,
                prev: Vec::new(),
            }
        }
    }

    struct Workspace {
        side: usize,
        mat: Vec<f64>,
        evals: Vec<f64>,
        #[cfg(feature = "system-lapack")]
        work: Vec<f64>,
        #[cfg(feature = "system-lapack")]
        iwork: Vec<i32>,
        low_rank: Vec<f64>,
        /// track-path panels, allocated only for sides that track
        #[cfg(feature = "system-lapack")]
        panels: Option<TrackPanels>,
    }

    #[cfg(feature = "system-lapack")]
    struct TrackPanels {
        cap: usize,
        y: Vec<f64>,
        z: Vec<f64>,
        ritz: Vec<f64>,
        t: Vec<f64>,
        tw: Vec<f64>,
        tau: Vec<f64>,
        qr_work: Vec<f64>,
        t_work: Vec<f64>,
        t_iwork: Vec<i32>,
    }

    /// Tracked subspace capacity for a block side.
    #[cfg(feature = "system-lapack")]
    const fn track_cap(side: usize) -> usize {
        side / 3
    }

    #[cfg(feature = "system-lapack")]
    extern "C" {
        fn dsyevd_(
            jobz: *const u8,
            uplo: *const u8,
            n: *const i32,
            a: *mut f64,
            lda: *const i32,
            w: *mut f64,
            work: *mut f64,
            lwork: *const i32,
            iwork: *mut i32,
            liwork: *const i32,
            info: *mut i32,
        );
        fn dsyrk_(
            uplo: *const u8,
            trans: *const u8,
            n: *const i32,
            k: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            beta: *const f64,
            c: *mut f64,
            ldc: *const i32,
        );
        fn dgemm_(
            transa: *const u8,
            transb: *const u8,
            m: *const i32,
            n: *const i32,
            k: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            b: *const f64,
            ldb: *const i32,
            beta: *const f64,
            c: *mut f64,
            ldc: *const i32,
        );
        fn dgeqrf_(
            m: *const i32,
            n: *const i32,
            a: *mut f64,
            lda: *const i32,
            tau: *mut f64,
            work: *mut f64,
            lwork: *const i32,
            info: *mut i32,
        );
        fn dorgqr_(
            m: *const i32,
            n: *const i32,
            k: *const i32,
            a: *mut f64,
            lda: *const i32,
            tau: *const f64,
            work: *mut f64,
            lwork: *const i32,
            info: *mut i32,
        );
    }

    impl Workspace {
        fn new(side: usize) -> Self {
            #[cfg(feature = "system-lapack")]
            let (work, iwork) = {
                let n = side as i32;
                let mut a = vec![0.0f64; side * side];
                let mut w = vec![0.0f64; side];
                let mut wq = [0.0f64];
                let mut iq = [0i32];
                let (mut info, lq) = (0i32, -1i32);
                unsafe {
                    dsyevd_(
                        b"V".as_ptr(),
                        b"L".as_ptr(),
                        &n,
                        a.as_mut_ptr(),
                        &n,
                        w.as_mut_ptr(),
                        wq.as_mut_ptr(),
                        &lq,
                        iq.as_mut_ptr(),
                        &lq,
                        &mut info,
                    );
                }
                (vec![0.0f64; wq[0] as usize], vec![0i32; iq[0] as usize])
            };
            #[cfg(feature = "system-lapack")]
            let panels = (side >= TRACK_MIN_SIDE).then(|| {
                let cap = track_cap(side);
                let (m, n) = (side as i32, cap as i32);
                let mut a = vec![0.0f64; side * cap];
                let mut tau = vec![0.0f64; cap];
                let mut wq = [0.0f64];
                let (mut info, lq) = (0i32, -1i32);
                unsafe {
                    dgeqrf_(
                        &m,
                        &n,
                        a.as_mut_ptr(),
                        &m,
                        tau.as_mut_ptr(),
                        wq.as_mut_ptr(),
                        &lq,
                        &mut info,
                    );
                }
                let mut qr_lw = wq[0] as usize;
                unsafe {
                    dorgqr_(
                        &m,
                        &n,
                        &n,
                        a.as_mut_ptr(),
                        &m,
                        tau.as_ptr(),
                        wq.as_mut_ptr(),
                        &lq,
                        &mut info,
                    );
                }
                qr_lw = qr_lw.max(wq[0] as usize).max(1);
                let mut t = vec![0.0f64; cap * cap];
                let mut tw = vec![0.0f64; cap];
                let mut ewq = [0.0f64];
                let mut eiq = [0i32];
                unsafe {
                    dsyevd_(
                        b"V".as_ptr(),
                        b"L".as_ptr(),
                        &n,
                        t.as_mut_ptr(),
                        &n,
                        tw.as_mut_ptr(),
                        ewq.as_mut_ptr(),
                        &lq,
                        eiq.as_mut_ptr(),
                        &lq,
                        &mut info,
                    );
                }
                TrackPanels {
                    cap,
                    y: a,
                    z: vec![0.0; side * cap],
                    ritz: vec![0.0; side * cap],
                    t,
                    tw,
                    tau,
                    qr_work: vec![0.0; qr_lw],
                    t_work: vec![0.0; ewq[0] as usize],
                    t_iwork: vec![0i32; eiq[0] as usize],
                }
            });
            Self {
                side,
                mat: vec![0.0; side * side],
                evals: vec![0.0; side],
                #[cfg(feature = "system-lapack")]
                work,
                #[cfg(feature = "system-lapack")]
                iwork,
                low_rank: vec![0.0; side * side],
                #[cfg(feature = "system-lapack")]
                panels,
            }
        }

        /// Eigendecompose `self.mat` in place: eigenvectors land in
        /// `self.mat` (column-major), eigenvalues in `self.evals`.
        fn eigh(&mut self) {
            #[cfg(feature = "system-lapack")]
            {
                let n = self.side as i32;
                let (lw, liw) = (self.work.len() as i32, self.iwork.len() as i32);
                let mut info = 0i32;
                unsafe {
                    dsyevd_(
                        b"V".as_ptr(),
                        b"L".as_ptr(),
                        &n,
                        self.mat.as_mut_ptr(),
                        &n,
                        self.evals.as_mut_ptr(),
                        self.work.as_mut_ptr(),
                        &lw,
                        self.iwork.as_mut_ptr(),
                        &liw,
                        &mut info,
                    );
                }
                if info != 0 {
                    // extremely rare; fall back to the pure-Rust path
                    self.eigh_fallback();
                }
            }
            #[cfg(not(feature = "system-lapack"))]
            self.eigh_fallback();
        }

        fn eigh_fallback(&mut self) {
            let d = self.side;
            let m = nalgebra::DMatrix::from_column_slice(d, d, &self.mat);
            let e = m.symmetric_eigen();
            self.evals.copy_from_slice(e.eigenvalues.as_slice());
            self.mat.copy_from_slice(e.eigenvectors.as_slice());
        }

        /// Overwrite `self.mat` (holding the input matrix) with its
        /// projection onto the PSD cone, using whichever of the positive
        /// or negative eigenspaces has lower rank.  When `refresh` is
        /// set, also reseed the block's tracked subspace from the fresh
        /// eigenvectors.
        fn project(&mut self, state: &mut BlockState, refresh: bool) {
            let d = self.side;
            self.low_rank.copy_from_slice(&self.mat);
            self.eigh();
            let pos: usize = self.evals.iter().filter(|&&w| w > 0.0).count();
            let neg = d - pos;
            if refresh {
                self.refresh_state(state, neg);
            }
            if neg == 0 {
                // already PSD: restore the input
                self.mat.copy_from_slice(&self.low_rank);
                return;
            }
            if pos == 0 {
                self.mat.fill(0.0);
                return;
            }
            // choose the cheaper reconstruction
            let use_pos = pos <= neg;
            let k = if use_pos { pos } else { neg };
            // gather scaled eigenvectors into a d x k panel
            let mut panel = vec![0.0f64; d * k];
            let mut col = 0;
            for (i, &w) in self.evals.iter().enumerate() {
                let take = if use_pos { w > 0.0 } else { w < 0.0 };
                if take {
                    let s = w.abs().sqrt();
                    for r in 0..d {
                        panel[col * d + r] = s * self.mat[i * d + r];
                    }
                    col += 1;
                }
            }
            if use_pos {
                syrk_lower(&mut self.mat, d, &panel, k, 0.0);
            } else {
                // X_+ = X + sum_{w<0} |w| v v'
                self.mat.copy_from_slice(&self.low_rank);
                syrk_lower(&mut self.mat, d, &panel, k, 1.0);
            }
        }

        /// Store the smaller-sign eigenspace, plus a cushion of
        /// nearest-zero directions of the other sign, as the block's
        /// tracked subspace.  Requires `self.mat` to still hold the
        /// eigenvectors from `eigh` and ascending eigenvalues.
        #[allow(unused_variables)]
        fn refresh_state(&mut self, state: &mut BlockState, neg: usize) {
            state.valid = false;
            #[cfg(feature = "system-lapack")]
            {
                let d = self.side;
                let cap = match &self.panels {
                    Some(p) => p.cap,
                    None => return,
                };
                // the rare dsyevd failure falls back to an unsorted
                // decomposition; tracking needs ascending order
                if self.evals.windows(2).any(|w| w[0] > w[1]) {
                    return;
                }
                let scale = self.evals[0].abs().max(self.evals[d - 1].abs());
                if scale <= 0.0 {
                    return;
                }
                let pos = d - neg;
                let track_neg = neg <= pos;
                let r = (if track_neg { neg } else { pos } + TRACK_PAD).min(d);
                if r > cap {
                    return;
                }
                // ascending eigenvalues: negatives occupy columns [0, neg)
                let start = if track_neg { 0 } else { d - r };
                state.v.resize(d * r, 0.0);
                state.v.copy_from_slice(&self.mat[start * d..(start + r) * d]);
                state.r = r;
                state.track_neg = track_neg;
                state.scale = scale;
                state.valid = true;
            }
        }

        /// One shifted power step plus Rayleigh-Ritz on the tracked
        /// subspace.  On success the projection of `self.mat` (which
        /// must hold the full symmetric input) lands in its lower
        /// triangle and the subspace is refreshed; on any failed check
        /// the input is left untouched and the caller runs the exact
        /// path.
        #[cfg(feature = "system-lapack")]
        fn try_tracked(&mut self, state: &mut BlockState, drift: f64) -> bool {
            let d = self.side;
            let r = state.r;
            let p = match self.panels.as_mut() {
                Some(p) => p,
                None => return false,
            };
            if r == 0 || r > p.cap {
                return false;
            }
            // fast-moving inputs (also the NaN/infinite first call) go exact
            if !(drift <= TRACK_MAX_DRIFT * state.scale) {
                return false;
            }
            let (di, ri) = (d as i32, r as i32);
            let (zero, one) = (0.0f64, 1.0f64);
            let mut info = 0i32;
            // power step y = (shift*I - Q)*V for negative-side tracking
            // (most-negative eigenvalues dominate), y = (Q + shift*I)*V
            // for positive-side tracking
            let shift = 1.35 * state.scale;
            let alpha = if state.track_neg { -1.0 } else { 1.0 };
            unsafe {
                dgemm_(
                    b"N".as_ptr(),
                    b"N".as_ptr(),
                    &di,
                    &ri,
                    &di,
                    &alpha,
                    self.mat.as_ptr(),
                    &di,
                    state.v.as_ptr(),
                    &di,
                    &zero,
                    p.y.as_mut_ptr(),
                    &di,
                );
            }
            for (yv, vv) in p.y[..d * r].iter_mut().zip(&state.v[..d * r]) {
                *yv += shift * *vv;
            }
            // orthonormalize the stepped basis in place
            let lw = p.qr_work.len() as i32;
            unsafe {
                dgeqrf_(
                    &di,
                    &ri,
                    p.y.as_mut_ptr(),
                    &di,
                    p.tau.as_mut_ptr(),
                    p.qr_work.as_mut_ptr(),
                    &lw,
                    &mut info,
                );
            }
            if info != 0 {
                return false;
            }
            unsafe {
                dorgqr_(
                    &di,
                    &ri,
                    &ri,
                    p.y.as_mut_ptr(),
                    &di,
                    p.tau.as_ptr(),
                    p.qr_work.as_mut_ptr(),
                    &lw,
                    &mut info,
                );
            }
            if info != 0 {
                return false;
            }
            // z = Q*B, t = B'*z with B the orthonormal basis
            unsafe {
                dgemm_(
                    b"N".as_ptr(),
                    b"N".as_ptr(),
                    &di,
                    &ri,
                    &di,
                    &one,
                    self.mat.as_ptr(),
                    &di,
                    p.y.as_ptr(),
                    &di,
                    &zero,
                    p.z.as_mut_ptr(),
                    &di,
                );
                dgemm_(
                    b"T".as_ptr(),
                    b"N".as_ptr(),
                    &ri,
                    &ri,
                    &di,
                    &one,
                    p.y.as_ptr(),
                    &di,
                    p.z.as_ptr(),
                    &di,
                    &zero,
                    p.t.as_mut_ptr(),
                    &ri,
                );
            }
            let (tlw, tliw) = (p.t_work.len() as i32, p.t_iwork.len() as i32);
            unsafe {
                dsyevd_(
                    b"V".as_ptr(),
                    b"L".as_ptr(),
                    &ri,
                    p.t.as_mut_ptr(),
                    &ri,
                    p.tw.as_mut_ptr(),
                    p.t_work.as_mut_ptr(),
                    &tlw,
                    p.t_iwork.as_mut_ptr(),
                    &tliw,
                    &mut info,
                );
            }
            if info != 0 {
                return false;
            }
            // Ritz vectors ritz = B*U and residual scratch zu = z*U
            let zu = &mut self.low_rank[..d * r];
            unsafe {
                dgemm_(
                    b"N".as_ptr(),
                    b"N".as_ptr(),
                    &di,
                    &ri,
                    &ri,
                    &one,
                    p.y.as_ptr(),
                    &di,
                    p.t.as_ptr(),
                    &ri,
                    &zero,
                    p.ritz.as_mut_ptr(),
                    &di,
                );
                dgemm_(
                    b"N".as_ptr(),
                    b"N".as_ptr(),
                    &di,
                    &ri,
                    &ri,
                    &one,
                    p.z.as_ptr(),
                    &di,
                    p.t.as_ptr(),
                    &ri,
                    &zero,
                    zu.as_mut_ptr(),
                    &di,
                );
            }
            // every Ritz pair must satisfy ||Q v - lambda v|| <= tol;
            // otherwise the subspace has drifted too far
            // TEMP tuning hook, remove before ship
            let frac = std::env::var("TRIADBELL_TRACK_FRAC")
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(TRACK_DRIFT_FRAC);
            let tol = TRACK_RES_TOL * state.scale + frac * drift;
            let mut new_scale = 0.0f64;
            for j in 0..r {
                let lam = p.tw[j];
                new_scale = new_scale.max(lam.abs());
                let mut ss = 0.0;
                for i in 0..d {
                    let e = zu[j * d + i] - lam * p.ritz[j * d + i];
                    ss += e * e;
                }
                if ss.sqrt() > tol {
                    return false;
                }
            }
            // the shift must stay strictly outside the tracked spectrum
            if new_scale > 1.25 * state.scale {
                return false;
            }
            // cushion check: if too few opposite-sign directions remain,
            // tracked-sign eigenvalues may have crossed in undetected
            let tracked_count = if state.track_neg {
                p.tw[..r].iter().filter(|&&w| w < 0.0).count()
            } else {
                p.tw[..r].iter().filter(|&&w| w > 0.0).count()
            };
            if r - tracked_count < TRACK_PAD / 2 {
                return false;
            }
            // stage scaled tracked-sign Ritz vectors; zu is free now
            let panel = &mut self.low_rank[..d * tracked_count];
            let mut col = 0;
            for j in 0..r {
                let lam = p.tw[j];
                let take = if state.track_neg { lam < 0.0 } else { lam > 0.0 };
                if take {
                    let s = lam.abs().sqrt();
                    for i in 0..d {
                        panel[col * d + i] = s * p.ritz[j * d + i];
                    }
                    col += 1;
                }
            }
            if state.track_neg {
                // X_+ = Q + sum_{lam<0} |lam| v v'; mat still holds Q
                if tracked_count > 0 {
                    syrk_lower(&mut self.mat, d, &self.low_rank, tracked_count, 1.0);
                }
            } else if tracked_count > 0 {
                syrk_lower(&mut self.mat, d, &self.low_rank, tracked_count, 0.0);
            } else {
                self.mat.fill(0.0);
            }
            // adopt the refreshed (orthonormal) Ritz basis
            state.v[..d * r].copy_from_slice(&p.ritz[..d * r]);
            true
        }
    }

    /// mat (lower triangle) = beta*mat + panel * panel'.
    fn syrk_lower(mat: &mut [f64], d: usize, panel: &[f64], k: usize, beta: f64) {
        if beta == 0.0 {
            mat.fill(0.0);
        }
        #[cfg(feature = "system-lapack")]
        {
            let (n, ki) = (d as i32, k as i32);
            let alpha = 1.0f64;
            unsafe {
                dsyrk_(
                    b"L".as_ptr(),
                    b"N".as_ptr(),
                    &n,
                    &ki,
                    &alpha,
                    panel.as_ptr(),
                    &n,
                    &beta,
                    mat.as_mut_ptr(),
                    &n,
                );
            }
        }
        #[cfg(not(feature = "system-lapack"))]
        {
            for c in 0..k {
                let colv = &panel[c * d..(c + 1) * d];
                for j in 0..d {
                    let vj = colv[j];
                    if vj != 0.0 {
                        for i in j..d {
                            mat[j * d + i] += vj * colv[i];
                        }
                    }
                }
            }
        }
    }

    impl Engine {
        /// `psd_sides` is the ordered per-block side list of the cone
        /// spec; each block keeps its own tracked subspace while blocks
        /// of equal side share scratch workspaces.
        pub fn new(psd_sides: &[usize]) -> Self {
            let mut sides: Vec<usize> = psd_sides.to_vec();
            sides.sort_unstable();
            sides.dedup();
            let per_side = sides.iter().map(|&s| Workspace::new(s)).collect();
            let blocks = psd_sides
                .iter()
                .map(|&s| {
                    let ws = sides.binary_search(&s).expect("side registered");
                    (ws, BlockState::new())
                })
                .collect();
            Self {
                per_side,
                sides,
                blocks,
                fast_hits: 0,
                fast_calls: 0,
            }
        }

        /// Project svec-packed `block` (the `idx`-th PSD block) onto the
        /// PSD cone in place.  `exact` forces a full eigendecomposition;
        /// inexact calls may use the block's tracked subspace.
        pub fn project_psd(&mut self, idx: usize, block: &mut [f64], d: usize, exact: bool) {
            debug_assert_eq!(block.len(), svec_len(d));
            let (ws_idx, state) = &mut self.blocks[idx];
            debug_assert_eq!(self.sides[*ws_idx], d);
            let ws = &mut self.per_side[*ws_idx];
            #[cfg(feature = "system-lapack")]
            let fast = {
                let tracking = d >= TRACK_MIN_SIDE;
                let drift = if tracking && state.prev.len() == block.len() {
                    // svec packing is Frobenius-isometric, so this is
                    // ||Q - Q_prev||_F
                    let ss: f64 = block
                        .iter()
                        .zip(&state.prev)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    ss.sqrt()
                } else {
                    f64::INFINITY
                };
                if tracking {
                    state.prev.clear();
                    state.prev.extend_from_slice(block);
                    self.fast_calls += 1;
                }
                super::svec_unpack(block, d, &mut ws.mat);
                let hit = !exact && state.valid && ws.try_tracked(state, drift);
                if hit {
                    self.fast_hits += 1;
                }
                hit
            };
            #[cfg(not(feature = "system-lapack"))]
            let fast = {
                let _ = exact;
                super::svec_unpack(block, d, &mut ws.mat);
                false
            };
            if !fast {
                ws.project(state, d >= TRACK_MIN_SIDE);
            }
            // both paths leave the lower triangle valid; svec reads the
            // lower triangle exclusively
            let mut kk = 0;
            for j in 0..d {
                block[kk] = ws.mat[j * d + j];
                kk += 1;
                for i in j + 1..d {
                    block[kk] = super::SQRT2 * ws.mat[j * d + i];
                    kk += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lp_problem() -> ConicProblem {
        // min -x  s.t.  x + s = 1, s >= 0  =>  x* = 1
        ConicProblem {
            a: SparseMat::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap(),
            b: vec![1.0],
            c: vec![-1.0],
            cones: ConeSpec {
                zero: 0,
                nonneg: 1,
                psd: vec![],
            },
        }
    }

    #[test]
    fn svec_roundtrip() {
        let d = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = vec![0.0; d * d];
        for j in 0..d {
            for i in j..d {
                let v = rng.gen_range(-1.0..1.0);
                m[j * d + i] = v;
                m[i * d + j] = v;
            }
        }
        let mut v = vec![0.0; svec_len(d)];
        svec_pack(&m, d, &mut v);
        let mut back = vec![0.0; d * d];
        svec_unpack(&v, d, &mut back);
        for (a, b) in m.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        // inner products agree
        let frob: f64 = m.iter().map(|x| x * x).sum();
        let dot: f64 = v.iter().map(|x| x * x).sum();
        assert!((frob - dot).abs() < 1e-12);
    }

    #[test]
    fn woodbury_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n_rows, n_cols) = (12, 7);
        let mut trips = Vec::new();
        // a few single-entry rows and a few dense coupling rows
        for r in 0..8 {
            trips.push((r, r % n_cols, rng.gen_range(-2.0..2.0)));
        }
        for r in 8..n_rows {
            for j in 0..n_cols {
                if rng.gen_bool(0.7) {
                    trips.push((r, j, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        let a = SparseMat::from_triplets(n_rows, n_cols, &trips).unwrap();
        let e = vec![1.0; n_rows];
        let f = vec![1.0; n_cols];
        let (sigma, rho) = (0.37, 1.9);
        let mut ns = NormalSolver::new(&a, &e, &f, sigma, rho);
        let rhs: Vec<f64> = (0..n_cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = rhs.clone();
        ns.solve(&mut x);
        // dense check: (sigma I + rho A'A) x == rhs
        let mut ax = vec![0.0; n_rows];
        a.mul(&x, &mut ax);
        let mut atax = vec![0.0; n_cols];
        a.mul_t(&ax, &mut atax);
        for j in 0..n_cols {
            let lhs = sigma * x[j] + rho * atax[j];
            assert!((lhs - rhs[j]).abs() < 1e-9, "col {j}: {lhs} vs {}", rhs[j]);
        }
    }

    #[test]
    fn tiny_lp_reaches_bound() {
        let sol = solve(&lp_problem(), &Settings::default(), None).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-5, "x = {}", sol.x[0]);
        assert!(sol.gap < 1e-5);
    }

    #[test]
    fn psd_correlation_bound() {
        // max t s.t. [[1, t], [t, 1]] psd  =>  t* = 1
        let d = 2;
        let mut b = vec![0.0; svec_len(d)];
        let eye = [1.0, 0.0, 0.0, 1.0];
        svec_pack(&eye, d, &mut b);
        // s = svec([[1, t], [t, 1]]) = b - A t with A column = -svec(E_offdiag)
        let a = SparseMat::from_triplets(svec_len(d), 1, &[(1, 0, -SQRT2)]).unwrap();
        let p = ConicProblem {
            a,
            b,
            c: vec![-1.0],
            cones: ConeSpec {
                zero: 0,
                nonneg: 0,
                psd: vec![d],
            },
        };
        let sol = solve(&p, &Settings::default(), None).unwrap();
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-4, "t = {}", sol.x[0]);
    }

    #[test]
    fn psd_determinant_boundary() {
        // max t s.t. [[1, t], [t, 2]] psd  =>  t* = sqrt(2)
        let d = 2;
        let m0 = [1.0, 0.0, 0.0, 2.0];
        let mut b = vec![0.0; svec_len(d)];
        svec_pack(&m0, d, &mut b);
        let a = SparseMat::from_triplets(svec_len(d), 1, &[(1, 0, -SQRT2)]).unwrap();
        let p = ConicProblem {
            a,
            b,
            c: vec![-1.0],
            cones: ConeSpec {
                zero: 0,
                nonneg: 0,
                psd: vec![d],
            },
        };
        let sol = solve(&p, &Settings::default(), None).unwrap();
        assert!(
            (sol.x[0] - std::f64::consts::SQRT_2).abs() < 1e-4,
            "t = {}",
            sol.x[0]
        );
    }

    #[cfg(feature = "system-lapack")]
    #[test]
    fn tracked_projection_matches_exact_under_drift() {
        // a 160-side block with a thin negative eigenvalue band drifts
        // slowly; inexact projections must stay near the exact ones and
        // the tracked path must actually engage (exact fallbacks from two
        // engines would agree bitwise)
        let d = 160usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let q = raw.qr().q();
        let mut lam: Vec<f64> = (0..d).map(|i| 0.05 + (i as f64) / d as f64).collect();
        for (i, l) in lam.iter_mut().take(20).enumerate() {
            *l = -0.4 * (20 - i) as f64 / 20.0;
        }
        let qm = &q * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam)) * q.transpose();
        let mut mat: Vec<f64> = qm.as_slice().to_vec();
        let mut packed = vec![0.0; svec_len(d)];
        let mut fast = test_engine(&[d]);
        let mut slow = test_engine(&[d]);
        svec_pack(&mat, d, &mut packed);
        let mut seed = packed.clone();
        fast.project_psd(0, &mut seed, d, true);
        let mut engaged = 0usize;
        for _ in 0..10 {
            for j in 0..d {
                for i in j..d {
                    let e = 1e-6 * rng.gen_range(-1.0..1.0);
                    mat[j * d + i] += e;
                    mat[i * d + j] = mat[j * d + i];
                }
            }
            svec_pack(&mat, d, &mut packed);
            let mut b1 = packed.clone();
            let mut b2 = packed.clone();
            fast.project_psd(0, &mut b1, d, false);
            slow.project_psd(0, &mut b2, d, true);
            let dev = b1
                .iter()
                .zip(&b2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(dev < 1e-4, "tracked projection deviates by {dev}");
            if dev > 0.0 {
                engaged += 1;
            }
        }
        assert!(engaged >= 5, "tracked path engaged only {engaged}/10 times");
    }

    #[test]
    fn mixed_cones_with_equality() {
        // max x1 + x2 s.t. x1 + x2 + x3 = 1 (zero), x2 <= 0.3, x1,x2 >= 0,
        // [[x1, 0], [0, 0.5]] psd (=> x1 >= 0 redundant)
        // optimum: x1 = 0.7? No: x1 + x2 = 1 - x3, x3 free... pin x3 = 0 via zero cone.
        // rows: zero: x1 + x2 = 1; nonneg: 0.3 - x2 >= 0, x1 >= 0, x2 >= 0
        let trips = vec![
            (0, 0, 1.0),
            (0, 1, 1.0),
            (1, 1, 1.0),
            (2, 0, -1.0),
            (3, 1, -1.0),
        ];
        let a = SparseMat::from_triplets(4, 2, &trips).unwrap();
        let p = ConicProblem {
            a,
            b: vec![1.0, 0.3, 0.0, 0.0],
            c: vec![-1.0, -2.0],
            cones: ConeSpec {
                zero: 1,
                nonneg: 3,
                psd: vec![],
            },
        };
        // max x1 + 2 x2 with x1 + x2 = 1, 0 <= x2 <= 0.3 => x2 = 0.3, obj 1.3
        let sol = solve(&p, &Settings::default(), None).unwrap();
        assert!((sol.x[0] - 0.7).abs() < 1e-5);
        assert!((sol.x[1] - 0.3).abs() < 1e-5);
        assert!((sol.primal_obj + 1.3).abs() < 1e-5);
    }

    #[test]
    fn dual_lies_in_dual_cone() {
        let sol = solve(&lp_problem(), &Settings::default(), None).unwrap();
        assert!(sol.y[0] >= -1e-9);
        // complementary slackness: s . y ~ 0
        assert!((sol.s[0] * sol.y[0]).abs() < 1e-6);
    }

    #[test]
    fn warm_start_converges_faster() {
        let p = lp_problem();
        let cold = solve(&p, &Settings::default(), None).unwrap();
        let warm = solve(&p, &Settings::default(), Some(&cold)).unwrap();
        assert!(warm.iters <= cold.iters);
        assert!((warm.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dump_parse_roundtrip() {
        let p = lp_problem();
        let text = p.dump();
        let q = ConicProblem::parse(&text).unwrap();
        assert_eq!(q.a.n_rows(), p.a.n_rows());
        assert_eq!(q.a.n_cols(), p.a.n_cols());
        assert_eq!(q.b, p.b);
        assert_eq!(q.c, p.c);
        assert_eq!(q.cones, p.cones);
        let sol = solve(&q, &Settings::default(), None).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let text = "conic-problem v1\nvars 1 rows 1\ncones zero 0 nonneg 1\nq 0 0 1.0\nend\n";
        assert!(matches!(
            ConicProblem::parse(text),
            Err(ConicError::Parse { .. })
        ));
    }

    #[test]
    fn badly_scaled_problem_still_solves() {
        // same LP with a 1e4 row scale and 1e-3 column scale
        let a = SparseMat::from_triplets(1, 1, &[(0, 0, 1e4 * 1e-3)]).unwrap();
        let p = ConicProblem {
            a,
            b: vec![1e4],
            c: vec![-1e-3],
            cones: ConeSpec {
                zero: 0,
                nonneg: 1,
                psd: vec![],
            },
        };
        let sol = solve(&p, &Settings::default(), None).unwrap();
        assert!((sol.x[0] - 1e3).abs() < 1e-2 * 1e3, "x = {}", sol.x[0]);
    }
}
