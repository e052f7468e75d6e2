//! A self-contained dense semidefinite solver for linear matrix
//! inequalities in inequality form:
//!
//! ```text
//! minimize    c' x
//! subject to  F(x) = F0 + x_1 F_1 + ... + x_n F_n  >=  0   (positive semidefinite)
//! ```
//!
//! The algorithm is an infeasible-start primal-dual path-following method
//! with Nesterov-Todd scaling and a Mehrotra-style adaptive centering
//! parameter. The slack `S` tracks `F(x)` up to a residual that is driven
//! to zero geometrically, so no separate phase-I problem is solved: when no
//! strictly feasible warm start is supplied, the initial slack is `F0`
//! shifted by `(|lambda_min(F0)| + 1) I`.
//!
//! Constraint matrices are stored as sparse symmetric triplets and may
//! carry an optional block-diagonal structure, which every kernel (scaling,
//! factorization, step length) exploits per block.
//!
//! Problems can be serialized to a plain-text triplet format for
//! cross-checking against external solvers, see [`LmiProblem::to_triplet_text`].

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// A sparse symmetric matrix kept as its upper triangle `(row, col, value)`
/// with `row <= col`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMat {
    dim: usize,
    upper: Vec<(usize, usize, f64)>,
}

impl SparseSymMat {
    /// Builds the matrix from triplets in any orientation. Entries given on
    /// one side of the diagonal are mirrored; if both orientations of the
    /// same entry are present their values must agree to `1e-12`
    /// relatively. Duplicate triplets for the same oriented position are
    /// rejected.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut seen: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::InvalidArgument {
                    name: "triplets",
                    reason: format!("index ({r}, {c}) out of range for dimension {dim}"),
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse matrix entry"));
            }
            if seen.insert((r, c), v).is_some() {
                return Err(Error::InvalidArgument {
                    name: "triplets",
                    reason: format!("duplicate entry at ({r}, {c})"),
                });
            }
        }
        let mut upper = Vec::with_capacity(seen.len());
        for (&(r, c), &v) in &seen {
            if r > c {
                continue;
            }
            if r < c {
                if let Some(&mirror) = seen.get(&(c, r)) {
                    if (v - mirror).abs() > 1e-12 * (1.0 + v.abs().max(mirror.abs())) {
                        return Err(Error::InvalidArgument {
                            name: "triplets",
                            reason: format!(
                                "asymmetric entries at ({r}, {c}): {v} versus {mirror}"
                            ),
                        });
                    }
                }
            }
            if v != 0.0 {
                upper.push((r, c, v));
            }
        }
        // Entries only given below the diagonal still need to survive.
        for (&(r, c), &v) in &seen {
            if r > c && !seen.contains_key(&(c, r)) && v != 0.0 {
                upper.push((c, r, v));
            }
        }
        upper.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Ok(SparseSymMat { dim, upper })
    }

    pub fn zero(dim: usize) -> Self {
        SparseSymMat { dim, upper: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle triplets, sorted by `(row, col)`.
    pub fn upper_triplets(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.upper {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Both triangle copies, convenient for trace kernels.
    fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.upper.len());
        for &(r, c, v) in &self.upper {
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v));
            }
        }
        out
    }
}

/// The LMI data: cost vector, constant term, and one sparse symmetric
/// matrix per decision variable.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    dim: usize,
    cost: DVector<f64>,
    f0: SparseSymMat,
    fis: Vec<SparseSymMat>,
    block_structure: Option<Vec<usize>>,
}

impl LmiProblem {
    pub fn new(
        cost: DVector<f64>,
        f0: SparseSymMat,
        fis: Vec<SparseSymMat>,
        block_structure: Option<Vec<usize>>,
    ) -> Result<Self> {
        let dim = f0.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument {
                name: "f0",
                reason: "constraint dimension must be positive".into(),
            });
        }
        if cost.len() != fis.len() {
            return Err(Error::dims(
                "LmiProblem::new",
                format!("{} constraint matrices", cost.len()),
                format!("{}", fis.len()),
            ));
        }
        if cost.is_empty() {
            return Err(Error::InvalidArgument {
                name: "cost",
                reason: "at least one decision variable is required".into(),
            });
        }
        if !cost.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("cost vector"));
        }
        for (i, f) in fis.iter().enumerate() {
            if f.dim() != dim {
                return Err(Error::dims(
                    "LmiProblem::new",
                    format!("constraint matrices of dimension {dim}"),
                    format!("{} (matrix {})", f.dim(), i + 1),
                ));
            }
        }
        if let Some(sizes) = &block_structure {
            if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
                return Err(Error::InvalidArgument {
                    name: "block_structure",
                    reason: "block sizes must be positive".into(),
                });
            }
            if sizes.iter().sum::<usize>() != dim {
                return Err(Error::InvalidArgument {
                    name: "block_structure",
                    reason: format!(
                        "block sizes sum to {}, constraint dimension is {dim}",
                        sizes.iter().sum::<usize>()
                    ),
                });
            }
            let layout = BlockLayout::new(sizes);
            for (idx, mat) in std::iter::once(&f0).chain(fis.iter()).enumerate() {
                for &(r, c, _) in mat.upper_triplets() {
                    if layout.block_of(r) != layout.block_of(c) {
                        return Err(Error::InvalidArgument {
                            name: "block_structure",
                            reason: format!(
                                "entry ({r}, {c}) of matrix {idx} crosses block boundaries"
                            ),
                        });
                    }
                }
            }
        }
        Ok(LmiProblem {
            dim,
            cost,
            f0,
            fis,
            block_structure,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nvars(&self) -> usize {
        self.cost.len()
    }

    pub fn cost(&self) -> &DVector<f64> {
        &self.cost
    }

    pub fn f0(&self) -> &SparseSymMat {
        &self.f0
    }

    pub fn constraint_matrices(&self) -> &[SparseSymMat] {
        &self.fis
    }

    pub fn block_structure(&self) -> Option<&[usize]> {
        self.block_structure.as_deref()
    }

    /// Dense evaluation of `F(x)`.
    pub fn constraint_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.nvars() {
            return Err(Error::dims(
                "LmiProblem::constraint_matrix",
                format!("point of dimension {}", self.nvars()),
                format!("{}", x.len()),
            ));
        }
        let mut m = self.f0.to_dense();
        for (i, f) in self.fis.iter().enumerate() {
            for &(r, c, v) in f.upper_triplets() {
                m[(r, c)] += x[i] * v;
                if r != c {
                    m[(c, r)] += x[i] * v;
                }
            }
        }
        Ok(m)
    }

    /// Serializes the problem to a line-oriented triplet format:
    ///
    /// ```text
    /// lmi 1
    /// dim <d>
    /// nvars <n>
    /// blocks <k> <d_1> ... <d_k>        (present only with block structure)
    /// c <var> <value>                   (nonzero cost entries, 0-based)
    /// m <mat> <row> <col> <value>       (mat 0 is F0, mat i is F_i; upper triangle)
    /// ```
    ///
    /// Values use 17 fractional digits of scientific notation, so the text
    /// round-trips `f64` exactly.
    pub fn to_triplet_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "lmi 1");
        let _ = writeln!(s, "dim {}", self.dim);
        let _ = writeln!(s, "nvars {}", self.nvars());
        if let Some(sizes) = &self.block_structure {
            let _ = write!(s, "blocks {}", sizes.len());
            for b in sizes {
                let _ = write!(s, " {b}");
            }
            let _ = writeln!(s);
        }
        for (i, v) in self.cost.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(s, "c {i} {v:.17e}");
            }
        }
        for (idx, mat) in std::iter::once(&self.f0).chain(self.fis.iter()).enumerate() {
            for &(r, c, v) in mat.upper_triplets() {
                let _ = writeln!(s, "m {idx} {r} {c} {v:.17e}");
            }
        }
        s
    }

    /// Parses the format written by [`LmiProblem::to_triplet_text`].
    pub fn from_triplet_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::DataFormat {
            path: "<lmi text>".into(),
            line,
            msg,
        };
        let mut dim = None;
        let mut nvars = None;
        let mut blocks = None;
        let mut cost_entries: Vec<(usize, f64)> = Vec::new();
        let mut mat_entries: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let n = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            match tag {
                "lmi" => {
                    if rest != ["1"] {
                        return Err(bad(n, format!("unsupported format version {rest:?}")));
                    }
                }
                "dim" | "nvars" => {
                    let v: usize = rest
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad(n, format!("unreadable {tag} line")))?;
                    if tag == "dim" {
                        dim = Some(v);
                    } else {
                        nvars = Some(v);
                    }
                }
                "blocks" => {
                    let sizes: Option<Vec<usize>> =
                        rest.iter().skip(1).map(|t| t.parse().ok()).collect();
                    let sizes = sizes.ok_or_else(|| bad(n, "unreadable blocks line".into()))?;
                    if rest.first().and_then(|t| t.parse::<usize>().ok()) != Some(sizes.len()) {
                        return Err(bad(n, "blocks count does not match the list".into()));
                    }
                    blocks = Some(sizes);
                }
                "c" => {
                    if rest.len() != 2 {
                        return Err(bad(n, "cost line needs index and value".into()));
                    }
                    let i = rest[0].parse().map_err(|_| bad(n, "bad cost index".into()))?;
                    let v = rest[1].parse().map_err(|_| bad(n, "bad cost value".into()))?;
                    cost_entries.push((i, v));
                }
                "m" => {
                    if rest.len() != 4 {
                        return Err(bad(n, "matrix line needs matrix, row, col, value".into()));
                    }
                    let k = rest[0].parse().map_err(|_| bad(n, "bad matrix index".into()))?;
                    let r = rest[1].parse().map_err(|_| bad(n, "bad row".into()))?;
                    let c = rest[2].parse().map_err(|_| bad(n, "bad col".into()))?;
                    let v = rest[3].parse().map_err(|_| bad(n, "bad value".into()))?;
                    mat_entries.push((k, r, c, v));
                }
                other => return Err(bad(n, format!("unknown line tag {other:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| bad(0, "missing dim line".into()))?;
        let nvars = nvars.ok_or_else(|| bad(0, "missing nvars line".into()))?;
        let mut cost = DVector::zeros(nvars);
        for (i, v) in cost_entries {
            if i >= nvars {
                return Err(bad(0, format!("cost index {i} out of range")));
            }
            cost[i] = v;
        }
        let mut triplets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nvars + 1];
        for (k, r, c, v) in mat_entries {
            if k > nvars {
                return Err(bad(0, format!("matrix index {k} out of range")));
            }
            triplets[k].push((r, c, v));
        }
        let mut mats = triplets
            .into_iter()
            .map(|t| SparseSymMat::from_triplets(dim, &t))
            .collect::<Result<Vec<_>>>()?;
        let f0 = mats.remove(0);
        LmiProblem::new(cost, f0, mats, blocks)
    }
}

/// Interior-point parameters.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stop once `tr(S Z) <= tol_gap * (1 + |objective|)`.
    pub tol_gap: f64,
    /// Tolerance for the primal and dual feasibility residuals.
    pub tol_feas: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_gap: 1e-7,
            tol_feas: 1e-8,
            max_iters: 200,
            step_fraction: 0.98,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol_gap > 0.0) || !(self.tol_feas > 0.0) {
            return Err(Error::InvalidArgument {
                name: "tolerances",
                reason: "tol_gap and tol_feas must be positive".into(),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument {
                name: "max_iters",
                reason: "at least one iteration is required".into(),
            });
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidArgument {
                name: "step_fraction",
                reason: "step_fraction must lie strictly between 0 and 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    /// Tolerances met; the duality gap certifies near-optimality.
    Optimal,
    /// Iteration budget exhausted before reaching the tolerances.
    MaxIters,
    /// A factorization broke down or the steps collapsed to zero.
    NumericalFailure,
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::MaxIters => "max_iters",
            SdpStatus::NumericalFailure => "numerical_failure",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Smallest eigenvalue of `F(x)` at the returned point.
    pub min_eig: f64,
    /// `tr(S Z)` at exit.
    pub duality_gap: f64,
}

/// Evaluates `F(x)` and reports `(x is feasible up to slack, min eigenvalue)`.
pub fn check_feasibility(problem: &LmiProblem, x: &DVector<f64>, slack: f64) -> Result<(bool, f64)> {
    let layout = BlockLayout::from_problem(problem);
    let fx = eval_blocks(problem, &layout, x)?;
    let min_eig = min_eigenvalue(&fx);
    Ok((min_eig >= -slack, min_eig))
}

/// Solves the LMI minimization. `warm_start` is used when it is strictly
/// feasible (all Cholesky factorizations of `F(x)` succeed); otherwise the
/// solver falls back to the shifted cold start.
///
/// Numerical outcomes are reported through [`SdpStatus`], not as errors;
/// `Err` is reserved for malformed inputs.
pub fn solve(
    problem: &LmiProblem,
    opts: &SolverOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SdpSolution> {
    opts.validate()?;
    let layout = BlockLayout::from_problem(problem);
    let nvars = problem.nvars();
    let trace_enabled = std::env::var_os("REACHELM_SDP_TRACE").is_some();

    let f0_blocks = split_matrix(&problem.f0, &layout);
    let fi_blocks: Vec<SplitMatrix> = problem
        .fis
        .iter()
        .map(|f| split_matrix(f, &layout))
        .collect();

    let f0_dense = materialize(&f0_blocks, &layout);
    let norm_c = problem.cost.norm();
    let ndim = layout.total() as f64;

    // Gram matrix of the constraint basis, used each iteration to project
    // the dual step back onto tr(F_i dZ) = rd_i. It is constant and far
    // better conditioned than the scaled normal matrix, so one
    // factorization up front serves the whole solve.
    let gram_chol = factor_with_jitter(assemble_normal_matrix(&fi_blocks, &layout.identity()))
        .ok_or_else(|| Error::Solver("constraint matrices are numerically dependent".into()))?;

    // --- Starting point ---------------------------------------------------
    let mut x = DVector::zeros(nvars);
    let mut s: Option<BlockVec> = None;
    if let Some(xw) = warm_start {
        if xw.len() != nvars {
            return Err(Error::dims(
                "solve",
                format!("warm start of dimension {nvars}"),
                format!("{}", xw.len()),
            ));
        }
        let fx = eval_blocks_split(&f0_dense, &fi_blocks, xw);
        if try_cholesky(&fx).is_some() {
            x = xw.clone();
            s = Some(fx);
        }
    }
    let mut s = match s {
        Some(s) => s,
        None => {
            let shift = min_eigenvalue(&f0_dense).abs() + 1.0;
            let mut s0 = f0_dense.clone();
            for b in &mut s0 {
                for i in 0..b.nrows() {
                    b[(i, i)] += shift;
                }
            }
            s0
        }
    };
    let mut z = layout.identity();

    let mut status = SdpStatus::MaxIters;
    let mut iterations = 0;
    let mut gap = trace_product(&s, &z);
    let mut stall_count = 0usize;
    let mut last_feasible_obj: Option<f64> = None;

    for iter in 0..opts.max_iters {
        let chol_s = match try_cholesky(&s) {
            Some(c) => c,
            None => {
                status = SdpStatus::NumericalFailure;
                break;
            }
        };

        let fx = eval_blocks_split(&f0_dense, &fi_blocks, &x);
        let norm_fx = frob(&fx);
        let r_f: BlockVec = fx
            .iter()
            .zip(s.iter())
            .map(|(a, b)| a - b)
            .collect();
        let pinf = frob(&r_f);

        let rd: DVector<f64> = DVector::from_fn(nvars, |i, _| {
            problem.cost[i] - sparse_dot(&fi_blocks[i], &z)
        });
        let dinf = rd.norm();

        gap = trace_product(&s, &z);
        let mu = gap / ndim;
        let obj = problem.cost.dot(&x);

        if trace_enabled {
            eprintln!(
                "sdp iter {iter:3}  obj {obj:+.9e}  gap {gap:.3e}  pinf {pinf:.3e}  dinf {dinf:.3e}"
            );
        }

        // On the central path with small residuals the primal objective can
        // only exceed the optimum by the current gap, so large jumps signal
        // a broken direction.
        if pinf <= 1e-6 * (1.0 + norm_fx) && dinf <= 1e-6 * (1.0 + norm_c) {
            if let Some(prev) = last_feasible_obj {
                debug_assert!(
                    obj <= prev + gap + 1e-6 * (1.0 + prev.abs()),
                    "objective jumped from {prev} to {obj} with gap {gap}"
                );
            }
            last_feasible_obj = Some(obj);
        }

        if gap <= opts.tol_gap * (1.0 + obj.abs())
            && pinf <= opts.tol_feas * (1.0 + norm_fx)
            && dinf <= opts.tol_feas * (1.0 + norm_c)
        {
            status = SdpStatus::Optimal;
            break;
        }
        iterations = iter + 1;

        // --- Nesterov-Todd scaling (per block) -----------------------------
        // With T = L^T Z L = Q diag(tau) Q^T and P = L^{-T} Q diag(tau^{1/4}),
        // the scaling W = P P^T satisfies W S W = Z, and the scaled point
        // V = P^T S P = P^{-1} Z P^{-T} = diag(tau^{1/2}) is diagonal, which
        // keeps the Mehrotra correction below well conditioned.
        let mut w_blocks: BlockVec = Vec::with_capacity(layout.count());
        let mut p_blocks: BlockVec = Vec::with_capacity(layout.count());
        let mut lam_blocks: Vec<DVector<f64>> = Vec::with_capacity(layout.count());
        let mut scaling_ok = true;
        for (b, chol) in chol_s.iter().enumerate() {
            let l = chol.l();
            let mut t = l.transpose() * &z[b] * &l;
            symmetrize(&mut t);
            let eig = t.symmetric_eigen();
            if eig.eigenvalues.iter().any(|&ev| ev <= 0.0) {
                scaling_ok = false;
                break;
            }
            let mut p_mat = l
                .transpose()
                .solve_upper_triangular(&eig.eigenvectors)
                .expect("cholesky factor is invertible");
            for (k, &ev) in eig.eigenvalues.iter().enumerate() {
                p_mat.column_mut(k).scale_mut(ev.powf(0.25));
            }
            let mut w = &p_mat * p_mat.transpose();
            symmetrize(&mut w);
            w_blocks.push(w);
            p_blocks.push(p_mat);
            lam_blocks.push(eig.eigenvalues.map(|ev| ev.sqrt()));
        }
        if !scaling_ok {
            status = SdpStatus::NumericalFailure;
            break;
        }

        // --- Schur complement M_ij = tr(F_i W F_j W) -----------------------
        let m = assemble_normal_matrix(&fi_blocks, &w_blocks);
        let m_chol = match factor_with_jitter(m.clone()) {
            Some(c) => c,
            None => {
                status = SdpStatus::NumericalFailure;
                break;
            }
        };
        // M turns severely ill-conditioned as mu shrinks; a couple of
        // refinement sweeps keep the solve residual near roundoff, which is
        // what stops dual infeasibility from creeping back in late
        // iterations. The extra matvecs are negligible next to the
        // factorization.
        let solve_refined = |rhs: &DVector<f64>| -> DVector<f64> {
            let mut sol = m_chol.solve(rhs);
            for _ in 0..2 {
                let resid = rhs - &m * &sol;
                if resid.norm() <= 1e-14 * (1.0 + rhs.norm()) {
                    break;
                }
                sol += m_chol.solve(&resid);
            }
            sol
        };

        // The primal residual collapses to roundoff after the first full
        // step, so skip its congruence once it no longer matters.
        let g_vec = if pinf > 1e-13 * (1.0 + norm_fx) {
            let w_rf_w = congruence(&w_blocks, &r_f);
            DVector::from_fn(nvars, |i, _| sparse_dot(&fi_blocks[i], &w_rf_w))
        } else {
            DVector::zeros(nvars)
        };

        // Affine predictor (sigma = 0) to gauge how much centering is
        // needed. Directions are examined in the scaled space, where the
        // current point is diag(lam) on both sides: Ds = P^T dS P and the
        // affine complementarity equation gives Dz = -diag(lam) - Ds.
        // Congruence by the invertible P preserves definiteness, so step
        // lengths computed here match the unscaled ones.
        let rhs_aff = DVector::from_fn(nvars, |i, _| -problem.cost[i] - g_vec[i]);
        let dx_aff = solve_refined(&rhs_aff);
        let ds_aff = step_in_s(&r_f, &fi_blocks, &dx_aff);
        let v_blocks: BlockVec = lam_blocks
            .iter()
            .map(|lam| DMatrix::from_diagonal(lam))
            .collect();
        let mut ds_aff_scaled: BlockVec = Vec::with_capacity(layout.count());
        let mut dz_aff_scaled: BlockVec = Vec::with_capacity(layout.count());
        for b in 0..layout.count() {
            let mut d = p_blocks[b].transpose() * &ds_aff[b] * &p_blocks[b];
            symmetrize(&mut d);
            let mut dz = -&d;
            for k in 0..dz.nrows() {
                dz[(k, k)] -= lam_blocks[b][k];
            }
            ds_aff_scaled.push(d);
            dz_aff_scaled.push(dz);
        }
        let alpha_aff = (opts.step_fraction
            * max_step(&v_blocks, &ds_aff_scaled).min(max_step(&v_blocks, &dz_aff_scaled)))
        .min(1.0);
        let gap_aff = gap
            + alpha_aff
                * (trace_product(&ds_aff_scaled, &v_blocks)
                    + trace_product(&v_blocks, &dz_aff_scaled))
            + alpha_aff * alpha_aff * trace_product(&ds_aff_scaled, &dz_aff_scaled);
        let mu_aff = (gap_aff / ndim).max(0.0);
        let sigma = (mu_aff / mu).powi(3).clamp(1e-6, 1.0);

        // Mehrotra corrector, also in the scaled space. The target
        // V_+^2 = sigma*mu*I linearizes to
        //   V o (Ds + Dz) = sigma*mu*I - V^2 - sym(Ds_aff Dz_aff),
        // and with V diagonal the Lyapunov operator V o (.) inverts
        // entrywise through 2 / (lam_i + lam_j). Mapping Ds + Dz back
        // gives the corrected complementarity residual Rc, from which
        // dZ = Rc - W dS W exactly as in the plain Newton step.
        let mut rc_blocks: BlockVec = Vec::with_capacity(layout.count());
        for b in 0..layout.count() {
            let lam = &lam_blocks[b];
            let mut u = &ds_aff_scaled[b] * &dz_aff_scaled[b];
            symmetrize(&mut u);
            let n = u.nrows();
            let mut rt = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let centering = if i == j { sigma * mu - lam[i] * lam[i] } else { 0.0 };
                    rt[(i, j)] = 2.0 * (centering - u[(i, j)]) / (lam[i] + lam[j]);
                }
            }
            let mut rc = &p_blocks[b] * rt * p_blocks[b].transpose();
            symmetrize(&mut rc);
            rc_blocks.push(rc);
        }

        let rhs = DVector::from_fn(nvars, |i, _| {
            sparse_dot(&fi_blocks[i], &rc_blocks) - rd[i] - g_vec[i]
        });
        let dx = solve_refined(&rhs);
        let ds = step_in_s(&r_f, &fi_blocks, &dx);
        let w_ds_w = congruence(&w_blocks, &ds);
        let mut dz: BlockVec = Vec::with_capacity(layout.count());
        for b in 0..layout.count() {
            let mut blk = &rc_blocks[b] - &w_ds_w[b];
            symmetrize(&mut blk);
            dz.push(blk);
        }

        // In exact arithmetic tr(F_i dZ) = rd_i, but the identity degrades
        // with the conditioning of the normal matrix and the leaked error
        // would accumulate in z. Project dZ back onto that affine manifold
        // (minimum Frobenius correction along the constraint basis) before
        // the line search, so dual infeasibility contracts by exactly
        // (1 - alpha) every iteration.
        let defect = DVector::from_fn(nvars, |i, _| rd[i] - sparse_dot(&fi_blocks[i], &dz));
        let coeff = gram_chol.solve(&defect);
        for (j, fi) in fi_blocks.iter().enumerate() {
            for (b, entries) in &fi.blocks {
                for &(p, q, v) in entries {
                    dz[*b][(p, q)] += coeff[j] * v;
                }
            }
        }

        // A common step length keeps the gap from outrunning feasibility:
        // residuals contract by exactly (1 - alpha), the gap by at most the
        // same factor plus the centering term, so the iterate stays in a
        // neighborhood where both converge together.
        let alpha = (opts.step_fraction * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);

        if trace_enabled {
            eprintln!("          sigma {sigma:.3e}  alpha_aff {alpha_aff:.2e}  alpha {alpha:.2e}");
        }

        x += alpha * &dx;
        for b in 0..layout.count() {
            s[b] += alpha * &ds[b];
            z[b] += alpha * &dz[b];
        }

        if alpha < 1e-7 {
            stall_count += 1;
            if stall_count >= 3 {
                status = SdpStatus::NumericalFailure;
                break;
            }
        } else {
            stall_count = 0;
        }
    }

    let fx = eval_blocks_split(&f0_dense, &fi_blocks, &x);
    let min_eig = min_eigenvalue(&fx);
    Ok(SdpSolution {
        objective: problem.cost.dot(&x),
        x,
        status,
        iterations,
        min_eig,
        duality_gap: gap,
    })
}

// --- Block machinery -------------------------------------------------------

type BlockVec = Vec<DMatrix<f64>>;

/// Per-block entry lists (both triangle copies, block-local indices).
struct SplitMatrix {
    /// Sorted by block index.
    blocks: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    /// Block index per global row.
    row_block: Vec<usize>,
}

impl BlockLayout {
    fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut row_block = Vec::new();
        let mut acc = 0;
        for (b, &s) in sizes.iter().enumerate() {
            offsets.push(acc);
            row_block.extend(std::iter::repeat(b).take(s));
            acc += s;
        }
        BlockLayout {
            sizes: sizes.to_vec(),
            offsets,
            row_block,
        }
    }

    fn from_problem(problem: &LmiProblem) -> Self {
        match &problem.block_structure {
            Some(sizes) => BlockLayout::new(sizes),
            None => BlockLayout::new(&[problem.dim]),
        }
    }

    fn count(&self) -> usize {
        self.sizes.len()
    }

    fn total(&self) -> usize {
        self.row_block.len()
    }

    fn block_of(&self, row: usize) -> usize {
        self.row_block[row]
    }

    fn identity(&self) -> BlockVec {
        self.sizes.iter().map(|&s| DMatrix::identity(s, s)).collect()
    }

    fn zeros(&self) -> BlockVec {
        self.sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect()
    }
}

fn split_matrix(mat: &SparseSymMat, layout: &BlockLayout) -> SplitMatrix {
    let mut per_block: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
        Default::default();
    for (r, c, v) in mat.full_entries() {
        let b = layout.block_of(r);
        let off = layout.offsets[b];
        per_block.entry(b).or_default().push((r - off, c - off, v));
    }
    SplitMatrix {
        blocks: per_block.into_iter().collect(),
    }
}

fn materialize(split: &SplitMatrix, layout: &BlockLayout) -> BlockVec {
    let mut out = layout.zeros();
    for (b, entries) in &split.blocks {
        for &(r, c, v) in entries {
            out[*b][(r, c)] = v;
        }
    }
    out
}

fn eval_blocks_split(f0: &BlockVec, fis: &[SplitMatrix], x: &DVector<f64>) -> BlockVec {
    let mut out = f0.clone();
    for (i, f) in fis.iter().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (b, entries) in &f.blocks {
            for &(r, c, v) in entries {
                out[*b][(r, c)] += xi * v;
            }
        }
    }
    out
}

fn eval_blocks(problem: &LmiProblem, layout: &BlockLayout, x: &DVector<f64>) -> Result<BlockVec> {
    if x.len() != problem.nvars() {
        return Err(Error::dims(
            "eval_blocks",
            format!("point of dimension {}", problem.nvars()),
            format!("{}", x.len()),
        ));
    }
    let f0 = materialize(&split_matrix(&problem.f0, layout), layout);
    let fis: Vec<SplitMatrix> = problem
        .fis
        .iter()
        .map(|f| split_matrix(f, layout))
        .collect();
    Ok(eval_blocks_split(&f0, &fis, x))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

fn frob(blocks: &BlockVec) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

/// `tr(A B)` for symmetric block matrices: the elementwise product sum.
fn trace_product(a: &BlockVec, b: &BlockVec) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// `tr(F M)` for a sparse symmetric `F` given by full entries.
fn sparse_dot(f: &SplitMatrix, m: &BlockVec) -> f64 {
    let mut acc = 0.0;
    for (b, entries) in &f.blocks {
        let blk = &m[*b];
        for &(r, c, v) in entries {
            acc += v * blk[(r, c)];
        }
    }
    acc
}

/// `W A W` per block for symmetric `A`.
fn congruence(w: &BlockVec, a: &BlockVec) -> BlockVec {
    w.iter()
        .zip(a.iter())
        .map(|(wb, ab)| {
            let mut m = wb * ab * wb;
            symmetrize(&mut m);
            m
        })
        .collect()
}

/// The primal slack direction `Delta S = R_f + sum dx_i F_i`.
fn step_in_s(r_f: &BlockVec, fis: &[SplitMatrix], dx: &DVector<f64>) -> BlockVec {
    let mut out = r_f.clone();
    for (i, f) in fis.iter().enumerate() {
        let d = dx[i];
        if d == 0.0 {
            continue;
        }
        for (b, entries) in &f.blocks {
            for &(r, c, v) in entries {
                out[*b][(r, c)] += d * v;
            }
        }
    }
    out
}

fn try_cholesky(blocks: &BlockVec) -> Option<Vec<Cholesky<f64, Dyn>>> {
    blocks
        .iter()
        .map(|b| Cholesky::new(b.clone()))
        .collect::<Option<Vec<_>>>()
}

fn min_eigenvalue(blocks: &BlockVec) -> f64 {
    blocks
        .iter()
        .map(|b| {
            let mut m = b.clone();
            symmetrize(&mut m);
            m.symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `M_ij = sum over blocks of tr(F_i W F_j W)`, computed pairwise over the
/// sparse entries:
/// `tr(F_i W F_j W) = sum_{(p,q,u) in F_i} sum_{(r,s,v) in F_j} u v W[q,r] W[s,p]`.
fn assemble_normal_matrix(fis: &[SplitMatrix], w: &BlockVec) -> DMatrix<f64> {
    let n = fis.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            // Two-pointer walk over the sorted block lists.
            let (bi, bj) = (&fis[i].blocks, &fis[j].blocks);
            let (mut a, mut b) = (0, 0);
            while a < bi.len() && b < bj.len() {
                match bi[a].0.cmp(&bj[b].0) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        let wb = &w[bi[a].0];
                        for &(p, q, u) in &bi[a].1 {
                            for &(r, s, v) in &bj[b].1 {
                                acc += u * v * wb[(q, r)] * wb[(s, p)];
                            }
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
            m[(i, j)] = acc;
            m[(j, i)] = acc;
        }
    }
    m
}

/// Cholesky with an escalating diagonal jitter; gives up after a few
/// attempts.
fn factor_with_jitter(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut jitter = 1e-14 * (1.0 + scale);
    for _ in 0..5 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// Largest certified `alpha` such that `P + alpha DP` stays positive
/// definite on `[0, alpha]`. Because the positive-definite segment of the
/// ray is an interval containing 0, a successful Cholesky at `alpha`
/// certifies the whole segment.
fn max_step(p: &BlockVec, dp: &BlockVec) -> f64 {
    let pd_at = |alpha: f64| -> bool {
        p.iter().zip(dp.iter()).all(|(pb, db)| {
            let trial = pb + alpha * db;
            Cholesky::new(trial).is_some()
        })
    };
    let hi0 = 1.25;
    if pd_at(hi0) {
        return hi0;
    }
    let mut hi = hi0;
    let mut lo = hi0 / 2.0;
    while !pd_at(lo) {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-13 {
            return 0.0;
        }
    }
    for _ in 0..6 {
        let mid = 0.5 * (lo + hi);
        if pd_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sp(dim: usize, t: &[(usize, usize, f64)]) -> SparseSymMat {
        SparseSymMat::from_triplets(dim, t).unwrap()
    }

    fn solve_default(p: &LmiProblem) -> SdpSolution {
        solve(p, &SolverOptions::default(), None).unwrap()
    }

    fn assert_optimal(sol: &SdpSolution, expected: f64) {
        assert_eq!(sol.status, SdpStatus::Optimal, "solution: {sol:?}");
        assert!(
            (sol.objective - expected).abs() <= 1e-6 * (1.0 + expected.abs()),
            "objective {} vs expected {expected}",
            sol.objective
        );
        assert!(sol.duality_gap <= 1e-7 * (1.0 + sol.objective.abs()) + 1e-12);
    }

    // Closed-form reference problems. Optimal values are derived next to
    // each constructor.

    /// min x subject to [x] >= 0: optimum 0.
    fn p_scalar() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[1.0]),
            SparseSymMat::zero(1),
            vec![sp(1, &[(0, 0, 1.0)])],
            None,
        )
        .unwrap();
        (p, 0.0)
    }

    /// min x subject to [[x, 1], [1, x]] >= 0. PSD needs x >= 0 and
    /// x^2 >= 1, so the optimum is x = 1.
    fn p_toeplitz() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[1.0]),
            sp(2, &[(0, 1, 1.0)]),
            vec![sp(2, &[(0, 0, 1.0), (1, 1, 1.0)])],
            None,
        )
        .unwrap();
        (p, 1.0)
    }

    /// min x1 + x2 subject to diag(x1 - 1, x2 - 2) >= 0: optimum 3.
    fn p_two_blocks() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[1.0, 1.0]),
            sp(2, &[(0, 0, -1.0), (1, 1, -2.0)]),
            vec![sp(2, &[(0, 0, 1.0)]), sp(2, &[(1, 1, 1.0)])],
            Some(vec![1, 1]),
        )
        .unwrap();
        (p, 3.0)
    }

    /// min -x subject to [[1, x], [x, 1]] >= 0, i.e. maximize x with
    /// |x| <= 1: optimum -1.
    fn p_correlation() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[-1.0]),
            sp(2, &[(0, 0, 1.0), (1, 1, 1.0)]),
            vec![sp(2, &[(0, 1, 1.0)])],
            None,
        )
        .unwrap();
        (p, -1.0)
    }

    /// min x1 subject to [[x1, x2], [x2, 1]] >= 0. The Schur complement
    /// gives x1 >= x2^2, so the optimum is 0 at the origin.
    fn p_schur() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[1.0, 0.0]),
            sp(2, &[(1, 1, 1.0)]),
            vec![sp(2, &[(0, 0, 1.0)]), sp(2, &[(0, 1, 1.0)])],
            None,
        )
        .unwrap();
        (p, 0.0)
    }

    /// min 2 x1 + x2 with blocks [x1 - 1] and [[x2, x1], [x1, 4]]:
    /// x1 >= 1 and x2 >= x1^2 / 4 force (1, 1/4), objective 2.25.
    fn p_coupled_blocks() -> (LmiProblem, f64) {
        let p = LmiProblem::new(
            DVector::from_row_slice(&[2.0, 1.0]),
            sp(3, &[(0, 0, -1.0), (2, 2, 4.0)]),
            vec![
                sp(3, &[(0, 0, 1.0), (1, 2, 1.0)]),
                sp(3, &[(1, 1, 1.0)]),
            ],
            Some(vec![1, 2]),
        )
        .unwrap();
        (p, 2.25)
    }

    #[test]
    fn analytic_suite_reaches_reference_objectives() {
        for (p, expected) in [
            p_scalar(),
            p_toeplitz(),
            p_two_blocks(),
            p_correlation(),
            p_schur(),
            p_coupled_blocks(),
        ] {
            let sol = solve_default(&p);
            assert_optimal(&sol, expected);
            let (feasible, min_eig) = check_feasibility(&p, &sol.x, 1e-6).unwrap();
            assert!(feasible, "min_eig {min_eig}");
            assert_relative_eq!(min_eig, sol.min_eig, epsilon = 1e-12);
        }
    }

    #[test]
    fn reported_invariants_hold_at_optimal_status() {
        for (p, _) in [p_toeplitz(), p_coupled_blocks(), p_schur()] {
            let sol = solve_default(&p);
            assert_eq!(sol.status, SdpStatus::Optimal);
            let fx = p.constraint_matrix(&sol.x).unwrap();
            assert!(sol.min_eig >= -1e-8 * (1.0 + fx.norm()));
            assert!(sol.duality_gap <= 1e-7 * (1.0 + sol.objective.abs()));
            assert!(sol.iterations <= 200);
        }
    }

    #[test]
    fn warm_start_is_used_when_strictly_feasible() {
        let (p, expected) = p_toeplitz();
        // x = 3 gives [[3, 1], [1, 3]], strictly positive definite.
        let warm = DVector::from_row_slice(&[3.0]);
        let sol = solve(&p, &SolverOptions::default(), Some(&warm)).unwrap();
        assert_optimal(&sol, expected);

        // An infeasible warm start must fall back to the cold start, not fail.
        let bad = DVector::from_row_slice(&[0.0]);
        let sol = solve(&p, &SolverOptions::default(), Some(&bad)).unwrap();
        assert_optimal(&sol, expected);
    }

    #[test]
    fn block_structure_matches_dense_solve() {
        let (blocked, _) = p_coupled_blocks();
        let dense = LmiProblem::new(
            blocked.cost().clone(),
            blocked.f0().clone(),
            blocked.constraint_matrices().to_vec(),
            None,
        )
        .unwrap();
        let a = solve_default(&blocked);
        let b = solve_default(&dense);
        assert_eq!(a.status, SdpStatus::Optimal);
        assert_eq!(b.status, SdpStatus::Optimal);
        assert!((a.objective - b.objective).abs() <= 1e-9);
    }

    #[test]
    fn solver_is_deterministic() {
        let (p, _) = p_coupled_blocks();
        let a = solve_default(&p);
        let b = solve_default(&p);
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn iteration_budget_is_reported_not_fatal() {
        let (p, _) = p_toeplitz();
        let opts = SolverOptions {
            max_iters: 1,
            ..SolverOptions::default()
        };
        let sol = solve(&p, &opts, None).unwrap();
        assert_eq!(sol.status, SdpStatus::MaxIters);
    }

    #[test]
    fn unbounded_certificate_is_a_numerical_outcome() {
        // min x with [[ -1 ]] + x [[0]]: the constraint can never become
        // PSD, so the solver must give up through a status, not a panic.
        let p = LmiProblem::new(
            DVector::from_row_slice(&[1.0]),
            sp(1, &[(0, 0, -1.0)]),
            vec![SparseSymMat::zero(1)],
            None,
        )
        .unwrap();
        let sol = solve_default(&p);
        assert_ne!(sol.status, SdpStatus::Optimal);
    }

    #[test]
    fn feasibility_check_reports_eigenvalue() {
        let (p, _) = p_toeplitz();
        let (ok, eig) = check_feasibility(&p, &DVector::from_row_slice(&[2.0]), 0.0).unwrap();
        assert!(ok);
        assert_relative_eq!(eig, 1.0, epsilon = 1e-10);
        let (ok, eig) = check_feasibility(&p, &DVector::from_row_slice(&[0.5]), 1e-9).unwrap();
        assert!(!ok);
        assert_relative_eq!(eig, -0.5, epsilon = 1e-10);
    }

    #[test]
    fn triplet_text_round_trips() {
        let (p, expected) = p_coupled_blocks();
        let text = p.to_triplet_text();
        let q = LmiProblem::from_triplet_text(&text).unwrap();
        assert_eq!(p.cost(), q.cost());
        assert_eq!(p.f0(), q.f0());
        assert_eq!(p.constraint_matrices(), q.constraint_matrices());
        assert_eq!(p.block_structure(), q.block_structure());
        assert_eq!(text, q.to_triplet_text());
        assert_optimal(&solve_default(&q), expected);
    }

    #[test]
    fn sparse_matrix_validates_inputs() {
        assert!(SparseSymMat::from_triplets(2, &[(0, 2, 1.0)]).is_err());
        assert!(SparseSymMat::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(SparseSymMat::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.5)]).is_err());
        // Agreeing mirrored entries are fine.
        let m = SparseSymMat::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(m.upper_triplets(), &[(0, 1, 1.0)]);
        // One-sided lower entries get mirrored.
        let m = SparseSymMat::from_triplets(2, &[(1, 0, 2.0)]).unwrap();
        assert_eq!(m.upper_triplets(), &[(0, 1, 2.0)]);
    }

    #[test]
    fn problem_validation_catches_structure_errors() {
        // Cost length disagrees with the matrix count.
        assert!(LmiProblem::new(
            DVector::from_row_slice(&[1.0, 2.0]),
            SparseSymMat::zero(2),
            vec![sp(2, &[(0, 0, 1.0)])],
            None,
        )
        .is_err());
        // Block sizes that do not tile the dimension.
        assert!(LmiProblem::new(
            DVector::from_row_slice(&[1.0]),
            SparseSymMat::zero(3),
            vec![sp(3, &[(0, 0, 1.0)])],
            Some(vec![1, 1]),
        )
        .is_err());
        // An entry crossing block boundaries.
        assert!(LmiProblem::new(
            DVector::from_row_slice(&[1.0]),
            SparseSymMat::zero(2),
            vec![sp(2, &[(0, 1, 1.0)])],
            Some(vec![1, 1]),
        )
        .is_err());
    }

    #[test]
    fn objective_decreases_once_feasible() {
        // Track the primal objective along the iterations of a feasible
        // warm-started solve; after the first centering steps it must be
        // non-increasing up to the duality gap.
        let (p, _) = p_correlation();
        let warm = DVector::from_row_slice(&[0.0]);
        let sol = solve(&p, &SolverOptions::default(), Some(&warm)).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        // The debug assertion inside `solve` enforces the monotonicity
        // bound on every iteration of this test run.
    }
}
