//! Robust least-squares fitting of the output layer over an interval
//! feature matrix.
//!
//! Write the interval regressors as a nominal matrix plus independent
//! entrywise deviations,
//!
//! ```text
//! H(tau) = H0 + sum_k tau_k hw_k E(j_k, i_k),    tau_k in [-1, 1],
//! ```
//!
//! where `E(j, i)` has a single one in row `j` (hidden unit), column `i`
//! (sample). The stacked residual `w(tau) = vec(W2 H(tau) - Y^T)` is affine
//! in `tau`: `w(tau) = w0 + Z tau`, with column `k` of `Z` equal to
//! `hw_k` times the `j_k`-th column of `W2` scattered into sample `i_k`'s
//! slot. Requiring `|w(tau)|^2 <= gamma` for all `tau` in the box is
//! relaxed by the S-procedure (one multiplier `lambda_k >= 0` per
//! deviation) and a Schur complement into the linear matrix inequality
//!
//! ```text
//! [ gamma - sum lambda     0        w0^T ]
//! [        0             Lambda     Z^T  ]   >=  0,
//! [        w0              Z        I    ]
//! ```
//!
//! which is affine in `(gamma, lambda, W2)` jointly and is minimized over
//! `gamma` with the [`crate::sdp`] solver. The optimal `gamma` is a
//! certified upper bound on the worst-case squared residual; it is exact
//! for a single deviation and conservative in general.
//!
//! Vectorization is row-major throughout: residual entry `rho = a * N + i`
//! refers to output `a` of sample `i`, matching the variable order
//! `(gamma, lambda_0.., W2[0,0], W2[0,1], ..)` documented on [`LmiLayout`].

use nalgebra::{DMatrix, DVector};

use crate::elm::train_least_squares;
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalMatrix};
use crate::reach::{hidden_interval_matrix, ShallowNet, UncertainDataset};
use crate::sdp::{self, LmiProblem, SdpSolution, SdpStatus, SolverOptions, SparseSymMat};

/// Deviation halfwidths at or below this threshold are treated as exact
/// entries and dropped from the decomposition.
const DEVIATION_EPS: f64 = 1e-14;

/// Largest number of deviation terms the brute-force certifier enumerates.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// One uncertain entry of the feature matrix: the entry for `(hidden,
/// sample)` ranges over `center +- halfwidth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub sample: usize,
    pub hidden: usize,
    pub halfwidth: f64,
}

/// An interval matrix split into its center and a list of independent
/// entrywise deviations, ordered by `(sample, hidden)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationDecomposition {
    center: DMatrix<f64>,
    deviations: Vec<Deviation>,
}

impl DeviationDecomposition {
    pub fn center(&self) -> &DMatrix<f64> {
        &self.center
    }

    pub fn deviations(&self) -> &[Deviation] {
        &self.deviations
    }

    /// Hidden width (rows of the feature matrix).
    pub fn n_hidden(&self) -> usize {
        self.center.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.center.ncols()
    }

    /// Rebuilds the interval matrix described by the decomposition.
    pub fn interval_hull(&self) -> Result<IntervalMatrix> {
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        for d in &self.deviations {
            lo[(d.hidden, d.sample)] -= d.halfwidth;
            hi[(d.hidden, d.sample)] += d.halfwidth;
        }
        let mut out = Vec::with_capacity(lo.nrows() * lo.ncols());
        for r in 0..lo.nrows() {
            for c in 0..lo.ncols() {
                out.push(Interval::new(lo[(r, c)], hi[(r, c)])?);
            }
        }
        let ncols = lo.ncols();
        Ok(IntervalMatrix::from_fn(lo.nrows(), ncols, |r, c| out[r * ncols + c]))
    }
}

/// Splits an interval feature matrix into center and deviations.
pub fn decompose(h: &IntervalMatrix) -> DeviationDecomposition {
    let center = h.center();
    let mut deviations = Vec::new();
    for i in 0..h.ncols() {
        for j in 0..h.nrows() {
            let hw = h.get(j, i).radius();
            if hw > DEVIATION_EPS {
                deviations.push(Deviation {
                    sample: i,
                    hidden: j,
                    halfwidth: hw,
                });
            }
        }
    }
    DeviationDecomposition { center, deviations }
}

/// How the decision variables and constraint rows of the robust LMI are
/// laid out.
///
/// Variables: `x = (gamma, lambda_0 .. lambda_{L-1}, vec(W2))` with
/// `vec(W2)` row-major, so `W2[a][b]` sits at `1 + L + a * n1 + b`.
///
/// The main block has dimension `1 + m + N * n2`: row 0 couples `gamma`,
/// rows `1..1+m` carry the deviation multipliers, and the trailing
/// `N * n2` rows hold the stacked residual with `rho = a * N + i`. One
/// extra `1 x 1` block per multiplier enforces `lambda >= lambda_floor`.
#[derive(Debug, Clone)]
pub struct LmiLayout {
    n_samples: usize,
    n_hidden: usize,
    n_outputs: usize,
    n_deviations: usize,
    /// Multiplier index used by each deviation.
    dev_multiplier: Vec<usize>,
    /// How many deviations use each multiplier.
    multiplier_counts: Vec<usize>,
    /// The hidden unit a shared multiplier belongs to (full mode: the
    /// deviation's hidden unit).
    multiplier_hidden: Vec<usize>,
}

impl LmiLayout {
    pub fn new(dec: &DeviationDecomposition, n_outputs: usize, shared_lambda: bool) -> Self {
        let m = dec.deviations.len();
        let (dev_multiplier, multiplier_counts, multiplier_hidden) = if shared_lambda {
            let mut hidden_units: Vec<usize> = dec.deviations.iter().map(|d| d.hidden).collect();
            hidden_units.sort_unstable();
            hidden_units.dedup();
            let index_of = |j: usize| hidden_units.binary_search(&j).expect("hidden unit present");
            let dev_multiplier: Vec<usize> =
                dec.deviations.iter().map(|d| index_of(d.hidden)).collect();
            let mut counts = vec![0usize; hidden_units.len()];
            for &l in &dev_multiplier {
                counts[l] += 1;
            }
            (dev_multiplier, counts, hidden_units)
        } else {
            (
                (0..m).collect(),
                vec![1usize; m],
                dec.deviations.iter().map(|d| d.hidden).collect(),
            )
        };
        LmiLayout {
            n_samples: dec.n_samples(),
            n_hidden: dec.n_hidden(),
            n_outputs,
            n_deviations: m,
            dev_multiplier,
            multiplier_counts,
            multiplier_hidden,
        }
    }

    pub fn n_multipliers(&self) -> usize {
        self.multiplier_counts.len()
    }

    pub fn n_deviations(&self) -> usize {
        self.n_deviations
    }

    /// Hidden unit associated with each multiplier.
    pub fn multiplier_hidden(&self) -> &[usize] {
        &self.multiplier_hidden
    }

    pub fn nvars(&self) -> usize {
        1 + self.n_multipliers() + self.n_outputs * self.n_hidden
    }

    pub fn var_gamma(&self) -> usize {
        0
    }

    pub fn var_lambda(&self, l: usize) -> usize {
        1 + l
    }

    pub fn var_w2(&self, a: usize, b: usize) -> usize {
        1 + self.n_multipliers() + a * self.n_hidden + b
    }

    /// Dimension of the main LMI block.
    pub fn main_dim(&self) -> usize {
        1 + self.n_deviations + self.n_samples * self.n_outputs
    }

    /// Main-block row/column of residual entry `(output a, sample i)`.
    fn residual_row(&self, a: usize, i: usize) -> usize {
        1 + self.n_deviations + a * self.n_samples + i
    }

    pub fn block_structure(&self) -> Vec<usize> {
        let mut blocks = vec![self.main_dim()];
        blocks.extend(std::iter::repeat(1).take(self.n_multipliers()));
        blocks
    }

    /// Extracts `W2` from a solver point.
    pub fn w2_from(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_outputs, self.n_hidden, |a, b| x[self.var_w2(a, b)])
    }

    /// Extracts the multiplier vector from a solver point.
    pub fn lambdas_from(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_multipliers(), |l, _| x[self.var_lambda(l)])
    }
}

/// Options for [`train_robust`].
#[derive(Debug, Clone)]
pub struct RobustTrainConfig {
    /// Tie the S-procedure multiplier of all deviations belonging to the
    /// same hidden unit. Shrinks the SDP at the price of a looser (never
    /// tighter) certificate.
    pub shared_lambda: bool,
    /// Lower bound enforced on every multiplier; must be non-negative.
    pub lambda_floor: f64,
    /// Start the solver from a strictly feasible point built around the
    /// plain least-squares fit.
    pub warm_start: bool,
    pub solver: SolverOptions,
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        // Training LMIs reach several hundred rows, where the normal
        // equations cannot be solved much past this accuracy in f64; the
        // gap tolerance still bounds the objective error by 1e-6 * (1 +
        // |obj|). The certificate only needs a feasible interior point, so
        // a looser gap merely makes gamma a hair more conservative.
        let mut solver = SolverOptions::default();
        solver.tol_gap = 1e-6;
        solver.tol_feas = 1e-7;
        RobustTrainConfig {
            shared_lambda: false,
            lambda_floor: 0.0,
            warm_start: true,
            solver,
        }
    }
}

impl RobustTrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.lambda_floor.is_finite() || self.lambda_floor < 0.0 {
            return Err(Error::InvalidArgument {
                name: "lambda_floor",
                reason: format!("must be finite and non-negative, got {}", self.lambda_floor),
            });
        }
        Ok(())
    }
}

/// Result of a robust fit: the trained output weights, the certified bound
/// `gamma` on the worst-case squared residual, the S-procedure multipliers,
/// and the solver report (`None` when the data carried no uncertainty and
/// training fell back to plain least squares).
#[derive(Debug, Clone)]
pub struct RobustResult {
    pub w2: DMatrix<f64>,
    pub gamma: f64,
    pub lambdas: DVector<f64>,
    pub solver_report: Option<SdpSolution>,
}

fn validate_targets(dec: &DeviationDecomposition, y: &DMatrix<f64>, n_outputs: usize) -> Result<()> {
    if y.nrows() != dec.n_samples() {
        return Err(Error::dims(
            "assemble_lmi",
            format!("targets with {} rows", dec.n_samples()),
            format!("{}", y.nrows()),
        ));
    }
    if y.ncols() != n_outputs {
        return Err(Error::dims(
            "assemble_lmi",
            format!("targets of dimension {n_outputs}"),
            format!("{}", y.ncols()),
        ));
    }
    if !y.iter().all(|v| v.is_finite()) || !dec.center.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("robust training data"));
    }
    Ok(())
}

/// Builds the LMI whose minimal `gamma` certifies the worst-case squared
/// residual, in the variable order documented on [`LmiLayout`]. Fails with
/// [`Error::NoUncertainty`] when the decomposition has no deviations.
pub fn assemble_lmi(
    dec: &DeviationDecomposition,
    y: &DMatrix<f64>,
    n_outputs: usize,
    cfg: &RobustTrainConfig,
) -> Result<LmiProblem> {
    cfg.validate()?;
    validate_targets(dec, y, n_outputs)?;
    if dec.deviations.is_empty() {
        return Err(Error::NoUncertainty);
    }
    let layout = LmiLayout::new(dec, n_outputs, cfg.shared_lambda);
    let n = dec.n_samples();
    let n1 = dec.n_hidden();
    let m = layout.n_deviations();
    let n_lambda = layout.n_multipliers();
    let main = layout.main_dim();
    let dim = main + n_lambda;

    // F0: identity on the residual block, -vec(Y^T) on the gamma row, and
    // the multiplier floors on the trailing 1x1 blocks.
    let mut f0 = Vec::new();
    for a in 0..n_outputs {
        for i in 0..n {
            let rho = layout.residual_row(a, i);
            f0.push((rho, rho, 1.0));
            let v = -y[(i, a)];
            if v != 0.0 {
                f0.push((0, rho, v));
            }
        }
    }
    if cfg.lambda_floor != 0.0 {
        for l in 0..n_lambda {
            f0.push((main + l, main + l, -cfg.lambda_floor));
        }
    }

    let mut fis = Vec::with_capacity(layout.nvars());

    // gamma
    fis.push(SparseSymMat::from_triplets(dim, &[(0, 0, 1.0)])?);

    // multipliers: -count at (0,0), +1 on each owned deviation row, +1 on
    // the floor block
    for l in 0..n_lambda {
        let mut t = vec![(0, 0, -(layout.multiplier_counts[l] as f64))];
        for (k, &dl) in layout.dev_multiplier.iter().enumerate() {
            if dl == l {
                t.push((1 + k, 1 + k, 1.0));
            }
        }
        t.push((main + l, main + l, 1.0));
        fis.push(SparseSymMat::from_triplets(dim, &t)?);
    }

    // W2[a][b]: couples the gamma row to the residual block through H0 and
    // the deviation rows through the halfwidths
    for a in 0..n_outputs {
        for b in 0..n1 {
            let mut t = Vec::new();
            for i in 0..n {
                let v = dec.center[(b, i)];
                if v != 0.0 {
                    t.push((0, layout.residual_row(a, i), v));
                }
            }
            for (k, d) in dec.deviations.iter().enumerate() {
                if d.hidden == b {
                    t.push((1 + k, layout.residual_row(a, d.sample), d.halfwidth));
                }
            }
            fis.push(SparseSymMat::from_triplets(dim, &t)?);
        }
    }

    let mut cost = DVector::zeros(layout.nvars());
    cost[layout.var_gamma()] = 1.0;

    debug_assert_eq!(fis.len(), layout.nvars());
    let _ = m;
    LmiProblem::new(
        cost,
        SparseSymMat::from_triplets(dim, &f0)?,
        fis,
        Some(layout.block_structure()),
    )
}

/// A strictly feasible starting point built around the least-squares fit:
/// `W2` is the nominal solution, the multipliers dominate `Z^T Z` row-wise
/// (Gershgorin), and `gamma` exceeds the exact Schur bound by one.
fn warm_start_point(
    dec: &DeviationDecomposition,
    y: &DMatrix<f64>,
    layout: &LmiLayout,
    lambda_floor: f64,
) -> Result<DVector<f64>> {
    let w2 = train_least_squares(&dec.center, y, 0.0)?;
    let m = layout.n_deviations();
    let r = layout.n_samples * layout.n_outputs;

    // w0 and Z for the nominal fit.
    let resid = &w2 * &dec.center - y.transpose();
    let mut w0 = DVector::zeros(r);
    for a in 0..layout.n_outputs {
        for i in 0..layout.n_samples {
            w0[a * layout.n_samples + i] = resid[(a, i)];
        }
    }
    let mut z = DMatrix::zeros(r, m);
    for (k, d) in dec.deviations.iter().enumerate() {
        for a in 0..layout.n_outputs {
            z[(a * layout.n_samples + d.sample, k)] = d.halfwidth * w2[(a, d.hidden)];
        }
    }

    let gram = z.transpose() * &z;
    // Row sums of |G| give a diagonal dominance margin per deviation; a
    // shared multiplier takes the worst row among its deviations.
    let mut lambdas = vec![lambda_floor + 1e-3; layout.n_multipliers()];
    for k in 0..m {
        let row_sum: f64 = (0..m).map(|l| gram[(k, l)].abs()).sum();
        let l = layout.dev_multiplier[k];
        lambdas[l] = lambdas[l].max(lambda_floor + 1e-3 + row_sum);
    }

    // Exact Schur bound: gamma must exceed
    // sum_k lambda_(k) + w0'w0 + w0'Z (Lambda - G)^{-1} Z'w0.
    let mut lam_minus_g = -gram;
    for k in 0..m {
        lam_minus_g[(k, k)] += lambdas[layout.dev_multiplier[k]];
    }
    let chol = nalgebra::Cholesky::new(lam_minus_g).ok_or_else(|| {
        Error::Solver("warm start construction lost diagonal dominance".into())
    })?;
    let ztw0 = z.transpose() * &w0;
    let q = ztw0.dot(&chol.solve(&ztw0));
    let lambda_total: f64 = layout
        .dev_multiplier
        .iter()
        .map(|&l| lambdas[l])
        .sum();
    let gamma = lambda_total + w0.norm_squared() + q + 1.0;

    let mut x = DVector::zeros(layout.nvars());
    x[layout.var_gamma()] = gamma;
    for (l, &v) in lambdas.iter().enumerate() {
        x[layout.var_lambda(l)] = v;
    }
    for a in 0..layout.n_outputs {
        for b in 0..layout.n_hidden {
            x[layout.var_w2(a, b)] = w2[(a, b)];
        }
    }
    Ok(x)
}

/// Fits the output layer of `net` robustly against the input boxes of
/// `data`: propagates the boxes through the hidden layer, decomposes the
/// interval feature matrix, and minimizes the certified worst-case squared
/// residual by SDP. Returns the retrained network together with the
/// certificate.
///
/// When no feature entry is uncertain (for example, all radii are zero)
/// the fit reduces to plain least squares and `gamma` is the exact squared
/// residual of that fit.
pub fn train_robust(
    net: &ShallowNet,
    data: &UncertainDataset,
    cfg: &RobustTrainConfig,
) -> Result<(ShallowNet, RobustResult)> {
    cfg.validate()?;
    if data.output_dim() != net.n2() {
        return Err(Error::dims(
            "train_robust",
            format!("targets of dimension {}", net.n2()),
            format!("{}", data.output_dim()),
        ));
    }
    let h = hidden_interval_matrix(net, data)?;
    let dec = decompose(&h);
    let y = data.targets();

    if dec.deviations.is_empty() {
        let w2 = train_least_squares(dec.center(), y, 0.0)?;
        let gamma = (&w2 * dec.center() - y.transpose()).norm_squared();
        let trained = net.with_output_weights(w2.clone())?;
        return Ok((
            trained,
            RobustResult {
                w2,
                gamma,
                lambdas: DVector::zeros(0),
                solver_report: None,
            },
        ));
    }

    let layout = LmiLayout::new(&dec, net.n2(), cfg.shared_lambda);
    let problem = assemble_lmi(&dec, y, net.n2(), cfg)?;
    let warm = if cfg.warm_start {
        Some(warm_start_point(&dec, y, &layout, cfg.lambda_floor)?)
    } else {
        None
    };
    let sol = sdp::solve(&problem, &cfg.solver, warm.as_ref())?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(format!(
            "robust fit did not converge: status {}, {} iterations, gap {:.3e}, min_eig {:.3e}",
            sol.status, sol.iterations, sol.duality_gap, sol.min_eig
        )));
    }
    let w2 = layout.w2_from(&sol.x);
    let lambdas = layout.lambdas_from(&sol.x);
    let gamma = sol.x[layout.var_gamma()];
    let trained = net.with_output_weights(w2.clone())?;
    Ok((
        trained,
        RobustResult {
            w2,
            gamma,
            lambdas,
            solver_report: Some(sol),
        },
    ))
}

/// Exact worst-case squared residual by enumerating every sign pattern of
/// the deviations. The maximum of the convex objective over the box is
/// attained at a vertex, so scanning `2^m` patterns is exhaustive. Limited
/// to [`BRUTE_FORCE_LIMIT`] deviations.
pub fn worst_case_residual_bruteforce(
    w2: &DMatrix<f64>,
    dec: &DeviationDecomposition,
    y: &DMatrix<f64>,
) -> Result<f64> {
    validate_targets(dec, y, w2.nrows())?;
    if w2.ncols() != dec.n_hidden() {
        return Err(Error::dims(
            "worst_case_residual_bruteforce",
            format!("W2 with {} columns", dec.n_hidden()),
            format!("{}", w2.ncols()),
        ));
    }
    let m = dec.deviations.len();
    if m > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyDeviations {
            limit: BRUTE_FORCE_LIMIT,
            actual: m,
        });
    }
    let base = w2 * &dec.center - y.transpose();
    if m == 0 {
        return Ok(base.norm_squared());
    }

    // Group deviations by the sample column they perturb.
    let mut per_column: Vec<Vec<(usize, DVector<f64>)>> = vec![Vec::new(); dec.n_samples()];
    for (k, d) in dec.deviations.iter().enumerate() {
        let contrib = d.halfwidth * w2.column(d.hidden).clone_owned();
        per_column[d.sample].push((k, contrib));
    }
    let untouched: f64 = (0..dec.n_samples())
        .filter(|&i| per_column[i].is_empty())
        .map(|i| base.column(i).norm_squared())
        .sum();

    let mut worst = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << m) {
        let mut total = untouched;
        for (i, devs) in per_column.iter().enumerate() {
            if devs.is_empty() {
                continue;
            }
            let mut col = base.column(i).clone_owned();
            for (k, contrib) in devs {
                if mask >> k & 1 == 1 {
                    col += contrib;
                } else {
                    col -= contrib;
                }
            }
            total += col.norm_squared();
        }
        worst = worst.max(total);
    }
    Ok(worst)
}
