//! Extreme-learning-machine style training: the hidden layer is drawn once
//! from a seeded RNG and frozen, and only the linear output layer is fit,
//! which reduces training to a least-squares problem in the hidden
//! features.

use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interval::{Activation, Interval};
use crate::reach::{Dataset, ShallowNet};

/// Configuration for the random hidden layer and the output-layer fit.
#[derive(Debug, Clone)]
pub struct ElmConfig {
    pub n_hidden: usize,
    pub activation: Activation,
    /// Interval that hidden weights and biases are drawn from, uniformly.
    pub weight_range: Interval,
    pub seed: u64,
    /// Tikhonov regularization for the output fit; 0 selects the minimum
    /// norm least-squares solution.
    pub ridge: f64,
}

impl Default for ElmConfig {
    fn default() -> Self {
        ElmConfig {
            n_hidden: 10,
            activation: Activation::Sigmoid,
            weight_range: Interval::new(-1.0, 1.0).expect("constant interval"),
            seed: 0,
            ridge: 1e-10,
        }
    }
}

impl ElmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 {
            return Err(Error::InvalidArgument {
                name: "n_hidden",
                reason: "hidden width must be at least 1".into(),
            });
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(Error::InvalidArgument {
                name: "ridge",
                reason: format!("must be finite and non-negative, got {}", self.ridge),
            });
        }
        Ok(())
    }
}

/// Draws the hidden layer from a ChaCha stream seeded with `cfg.seed` and
/// returns a network whose output layer is zero (to be fit afterwards).
///
/// The draw order is fixed (`W1` row-major, then `b1`), so a given seed
/// produces bit-identical parameters on every platform.
pub fn init_random(cfg: &ElmConfig, n0: usize, n2: usize) -> Result<ShallowNet> {
    cfg.validate()?;
    if n0 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument {
            name: "dimensions",
            reason: format!("input and output dimensions must be positive, got ({n0}, {n2})"),
        });
    }
    let dist = Uniform::new_inclusive(cfg.weight_range.lo(), cfg.weight_range.hi()).map_err(|e| {
        Error::InvalidArgument {
            name: "weight_range",
            reason: e.to_string(),
        }
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w1 = DMatrix::zeros(cfg.n_hidden, n0);
    for r in 0..cfg.n_hidden {
        for c in 0..n0 {
            w1[(r, c)] = dist.sample(&mut rng);
        }
    }
    let mut b1 = DVector::zeros(cfg.n_hidden);
    for r in 0..cfg.n_hidden {
        b1[r] = dist.sample(&mut rng);
    }
    ShallowNet::new(
        w1,
        b1,
        DMatrix::zeros(n2, cfg.n_hidden),
        DVector::zeros(n2),
        cfg.activation,
        Activation::Identity,
    )
}

/// Hidden feature matrix for point inputs: column `i` holds the hidden
/// activations of sample `i` (rows of `u`). An empty sample set yields an
/// `n1 x 0` matrix.
pub fn point_features(net: &ShallowNet, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.ncols() != net.n0() {
        return Err(Error::dims(
            "point_features",
            format!("samples of dimension {}", net.n0()),
            format!("{}", u.ncols()),
        ));
    }
    let mut h = DMatrix::zeros(net.n1(), u.nrows());
    for i in 0..u.nrows() {
        let f = net.hidden_features(&u.row(i).transpose())?;
        h.set_column(i, &f);
    }
    Ok(h)
}

/// Least-squares fit of the output weights: minimizes
/// `|W2 h - y^T|_F^2 + ridge |W2|_F^2` over `W2`.
///
/// Solved through the SVD of `h^T`; with `ridge = 0`, singular values below
/// `eps * max(N, n1) * sigma_max` are treated as zero, which picks the
/// minimum-norm solution for rank-deficient feature matrices.
pub fn train_least_squares(h: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if h.ncols() == 0 {
        return Err(Error::EmptyData("least-squares fit needs at least one sample"));
    }
    if y.nrows() != h.ncols() {
        return Err(Error::dims(
            "train_least_squares",
            format!("targets with {} rows", h.ncols()),
            format!("{}", y.nrows()),
        ));
    }
    if !h.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("least-squares input"));
    }
    if !ridge.is_finite() || ridge < 0.0 {
        return Err(Error::InvalidArgument {
            name: "ridge",
            reason: format!("must be finite and non-negative, got {ridge}"),
        });
    }

    let n1 = h.nrows();
    let n = h.ncols();
    let a = h.transpose();
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let sigma = &svd.singular_values;

    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = f64::EPSILON * sigma_max * n.max(n1) as f64;

    // W2^T = V f(Sigma) U^T Y with f the ridge-filtered inverse.
    let mut uty = u.transpose() * y;
    for (k, &s) in sigma.iter().enumerate() {
        let f = if ridge > 0.0 {
            s / (s * s + ridge)
        } else if s > cutoff {
            1.0 / s
        } else {
            0.0
        };
        uty.row_mut(k).scale_mut(f);
    }
    let w2t = v_t.transpose() * uty;
    Ok(w2t.transpose())
}

/// Convenience wrapper: computes the point features of `data` and returns a
/// copy of `net` with the fitted output weights.
pub fn fit_output_layer(net: &ShallowNet, data: &Dataset, ridge: f64) -> Result<ShallowNet> {
    let h = point_features(net, &data.inputs)?;
    let w2 = train_least_squares(&h, &data.targets, ridge)?;
    net.with_output_weights(w2)
}

/// Mean squared error of the linear readout `W2 * point_features(U)`
/// against `Y`, averaged over all `N * n2` entries.
///
/// Output bias and output activation are not applied; networks produced by
/// the trainers in this crate use an identity output with zero bias, for
/// which this is the exact forward error.
pub fn mse(net: &ShallowNet, u: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() == 0 {
        return Err(Error::EmptyData("mse needs at least one sample"));
    }
    if y.nrows() != u.nrows() {
        return Err(Error::dims(
            "mse",
            format!("targets with {} rows", u.nrows()),
            format!("{}", y.nrows()),
        ));
    }
    if y.ncols() != net.n2() {
        return Err(Error::dims(
            "mse",
            format!("targets of dimension {}", net.n2()),
            format!("{}", y.ncols()),
        ));
    }
    let h = point_features(net, u)?;
    let resid = net.w2() * h - y.transpose();
    Ok(resid.norm_squared() / (u.nrows() * net.n2()) as f64)
}
