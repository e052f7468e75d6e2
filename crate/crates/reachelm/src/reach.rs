//! Reachable-set computation for one-hidden-layer networks under
//! interval-bounded input perturbations.
//!
//! For a single affine layer followed by an entrywise non-decreasing
//! activation, the interval image computed here is the exact projection of
//! the reachable set onto each coordinate; composing layers keeps the
//! enclosure sound (every true output stays inside) but may widen it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::{apply_activation, interval_affine, Activation, IntervalMatrix, IntervalVector};

/// A feedforward network with one hidden layer:
/// `x = phi2(W2 * phi1(W1 * u + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl ShallowNet {
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if b1.len() != w1.nrows() {
            return Err(Error::dims(
                "ShallowNet::new",
                format!("b1 of length {}", w1.nrows()),
                format!("{}", b1.len()),
            ));
        }
        if w2.ncols() != w1.nrows() {
            return Err(Error::dims(
                "ShallowNet::new",
                format!("W2 with {} columns", w1.nrows()),
                format!("{}", w2.ncols()),
            ));
        }
        if b2.len() != w2.nrows() {
            return Err(Error::dims(
                "ShallowNet::new",
                format!("b2 of length {}", w2.nrows()),
                format!("{}", b2.len()),
            ));
        }
        for (name, finite) in [
            ("W1", w1.iter().all(|v| v.is_finite())),
            ("b1", b1.iter().all(|v| v.is_finite())),
            ("W2", w2.iter().all(|v| v.is_finite())),
            ("b2", b2.iter().all(|v| v.is_finite())),
        ] {
            if !finite {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(ShallowNet {
            w1,
            b1,
            w2,
            b2,
            hidden_activation,
            output_activation,
        })
    }

    /// Input dimension.
    pub fn n0(&self) -> usize {
        self.w1.ncols()
    }

    /// Hidden width.
    pub fn n1(&self) -> usize {
        self.w1.nrows()
    }

    /// Output dimension.
    pub fn n2(&self) -> usize {
        self.w2.nrows()
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// Copy of the network with the output weights replaced. The hidden
    /// layer is untouched, which is the update both training methods make.
    pub fn with_output_weights(&self, w2: DMatrix<f64>) -> Result<Self> {
        ShallowNet::new(
            self.w1.clone(),
            self.b1.clone(),
            w2,
            self.b2.clone(),
            self.hidden_activation,
            self.output_activation,
        )
    }

    pub fn hidden_features(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.n0() {
            return Err(Error::dims(
                "ShallowNet::hidden_features",
                format!("input of length {}", self.n0()),
                format!("{}", u.len()),
            ));
        }
        let pre = &self.w1 * u + &self.b1;
        Ok(pre.map(|v| self.hidden_activation.apply(v)))
    }

    pub fn forward(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.hidden_features(u)?;
        let pre = &self.w2 * h + &self.b2;
        Ok(pre.map(|v| self.output_activation.apply(v)))
    }
}

/// Point samples `(U, Y)`: rows of `inputs` are the `N` input vectors, rows
/// of `targets` the matching outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::dims(
                "Dataset::new",
                format!("targets with {} rows", inputs.nrows()),
                format!("{}", targets.nrows()),
            ));
        }
        if !inputs.iter().all(|v| v.is_finite()) || !targets.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset entry"));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn n_samples(&self) -> usize {
        self.inputs.nrows()
    }
}

/// Samples whose inputs are only known up to a box: sample `i` lies in
/// `[centers_i - radii_i, centers_i + radii_i]` coordinatewise, while the
/// targets stay exact.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainDataset {
    centers: DMatrix<f64>,
    radii: DMatrix<f64>,
    targets: DMatrix<f64>,
}

impl UncertainDataset {
    pub fn new(centers: DMatrix<f64>, radii: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if radii.shape() != centers.shape() {
            return Err(Error::dims(
                "UncertainDataset::new",
                format!("radii of shape {:?}", centers.shape()),
                format!("{:?}", radii.shape()),
            ));
        }
        if targets.nrows() != centers.nrows() {
            return Err(Error::dims(
                "UncertainDataset::new",
                format!("targets with {} rows", centers.nrows()),
                format!("{}", targets.nrows()),
            ));
        }
        if !centers.iter().all(|v| v.is_finite())
            || !radii.iter().all(|v| v.is_finite())
            || !targets.iter().all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("uncertain dataset entry"));
        }
        if radii.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidArgument {
                name: "radii",
                reason: "perturbation radii must be non-negative".into(),
            });
        }
        Ok(UncertainDataset { centers, radii, targets })
    }

    /// Every input coordinate of every sample gets the same radius `delta`.
    pub fn from_uniform_delta(data: &Dataset, delta: f64) -> Result<Self> {
        let radii = DMatrix::from_element(data.inputs.nrows(), data.inputs.ncols(), delta);
        UncertainDataset::new(data.inputs.clone(), radii, data.targets.clone())
    }

    /// One radius per input coordinate, shared by all samples.
    pub fn from_column_deltas(data: &Dataset, deltas: &[f64]) -> Result<Self> {
        if deltas.len() != data.inputs.ncols() {
            return Err(Error::dims(
                "UncertainDataset::from_column_deltas",
                format!("{} per-coordinate radii", data.inputs.ncols()),
                format!("{}", deltas.len()),
            ));
        }
        let radii = DMatrix::from_fn(data.inputs.nrows(), data.inputs.ncols(), |_, c| deltas[c]);
        UncertainDataset::new(data.inputs.clone(), radii, data.targets.clone())
    }

    pub fn n_samples(&self) -> usize {
        self.centers.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn radii(&self) -> &DMatrix<f64> {
        &self.radii
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    /// The input box of sample `i`.
    pub fn input_box(&self, i: usize) -> Result<IntervalVector> {
        let c = self.centers.row(i).transpose();
        let r = self.radii.row(i).transpose();
        IntervalVector::from_center_radius(&c, &r)
    }
}

/// Exact interval image of one layer: affine map, then a monotone
/// activation evaluated at the endpoints.
pub fn layer_reach(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    act: Activation,
    x: &IntervalVector,
) -> Result<IntervalVector> {
    Ok(apply_activation(act, &interval_affine(w, b, x)?))
}

/// Boxes enclosing the hidden and output layers of `net` over the input box
/// `x0`. The hidden box is exact per coordinate; the output box is a sound
/// enclosure (the hidden box already decouples the coordinates).
pub fn network_reach(net: &ShallowNet, x0: &IntervalVector) -> Result<(IntervalVector, IntervalVector)> {
    if x0.len() != net.n0() {
        return Err(Error::dims(
            "network_reach",
            format!("input box of length {}", net.n0()),
            format!("{}", x0.len()),
        ));
    }
    let hidden = layer_reach(net.w1(), net.b1(), net.hidden_activation(), x0)?;
    let output = layer_reach(net.w2(), net.b2(), net.output_activation(), &hidden)?;
    Ok((hidden, output))
}

/// The interval feature matrix `H` (hidden width x samples): column `i` is
/// the exact hidden-layer box of sample `i`'s input box. This is the
/// interval-valued regressor matrix that robust training consumes.
pub fn hidden_interval_matrix(net: &ShallowNet, data: &UncertainDataset) -> Result<IntervalMatrix> {
    if data.input_dim() != net.n0() {
        return Err(Error::dims(
            "hidden_interval_matrix",
            format!("samples of dimension {}", net.n0()),
            format!("{}", data.input_dim()),
        ));
    }
    let mut columns = Vec::with_capacity(data.n_samples());
    for i in 0..data.n_samples() {
        let x0 = data.input_box(i)?;
        columns.push(layer_reach(net.w1(), net.b1(), net.hidden_activation(), &x0)?);
    }
    IntervalMatrix::from_columns(net.n1(), &columns)
}

/// Worst-case output box size over the dataset: the largest Euclidean norm,
/// over samples, of the per-coordinate radius vector of the output box.
pub fn output_radius(net: &ShallowNet, data: &UncertainDataset) -> Result<f64> {
    if data.n_samples() == 0 {
        return Err(Error::EmptyData("output_radius needs at least one sample"));
    }
    let mut worst = 0.0f64;
    for i in 0..data.n_samples() {
        let (_, out) = network_reach(net, &data.input_box(i)?)?;
        worst = worst.max(out.radius().norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_net() -> ShallowNet {
        ShallowNet::new(
            DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 2.0, 0.3, -0.7, -0.2]),
            DVector::from_row_slice(&[0.1, -0.4, 0.0]),
            DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 1.5, -1.0]),
            DVector::from_row_slice(&[0.0, 0.2]),
            Activation::Sigmoid,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn constructor_checks_shapes() {
        let bad_b1 = ShallowNet::new(
            DMatrix::zeros(3, 2),
            DVector::zeros(2),
            DMatrix::zeros(2, 3),
            DVector::zeros(2),
            Activation::Tanh,
            Activation::Identity,
        );
        assert!(matches!(bad_b1, Err(Error::DimensionMismatch { .. })));

        let bad_w2 = ShallowNet::new(
            DMatrix::zeros(3, 2),
            DVector::zeros(3),
            DMatrix::zeros(2, 4),
            DVector::zeros(2),
            Activation::Tanh,
            Activation::Identity,
        );
        assert!(matches!(bad_w2, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn forward_matches_manual_composition() {
        let net = toy_net();
        let u = DVector::from_row_slice(&[0.3, -0.6]);
        let sigma = |x: f64| 1.0 / (1.0 + (-x).exp());
        let h = [
            sigma(0.5 * 0.3 - 1.0 * -0.6 + 0.1),
            sigma(2.0 * 0.3 + 0.3 * -0.6 - 0.4),
            sigma(-0.7 * 0.3 - 0.2 * -0.6),
        ];
        let want = [
            1.0 * h[0] - 2.0 * h[1] + 0.5 * h[2],
            1.5 * h[1] - 1.0 * h[2] + 0.2,
        ];
        let got = net.forward(&u).unwrap();
        assert_relative_eq!(got[0], want[0], max_relative = 1e-14);
        assert_relative_eq!(got[1], want[1], max_relative = 1e-14);
    }

    #[test]
    fn network_reach_contains_sampled_trajectories() {
        let net = toy_net();
        let x0 = IntervalVector::new(vec![
            Interval::new(-0.2, 0.4).unwrap(),
            Interval::new(0.1, 0.9).unwrap(),
        ]);
        let (hidden, output) = network_reach(&net, &x0).unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..10_000 {
            let u = DVector::from_fn(2, |i, _| {
                let e = x0.get(i);
                rng.random_range(e.lo()..=e.hi())
            });
            assert!(hidden.contains_point(&net.hidden_features(&u).unwrap()));
            assert!(output.contains_point(&net.forward(&u).unwrap()));
        }
    }

    #[test]
    fn hidden_bounds_are_attained_at_sign_corners() {
        // Exactness of the hidden box: for each hidden unit the bound is
        // attained at the corner of the input box selected by the signs of
        // that unit's weight row.
        let net = toy_net();
        let x0 = IntervalVector::new(vec![
            Interval::new(-1.0, 0.5).unwrap(),
            Interval::new(0.2, 1.3).unwrap(),
        ]);
        let (hidden, _) = network_reach(&net, &x0).unwrap();
        for j in 0..net.n1() {
            let mut u_hi = DVector::zeros(2);
            let mut u_lo = DVector::zeros(2);
            for k in 0..2 {
                let e = x0.get(k);
                if net.w1()[(j, k)] >= 0.0 {
                    u_hi[k] = e.hi();
                    u_lo[k] = e.lo();
                } else {
                    u_hi[k] = e.lo();
                    u_lo[k] = e.hi();
                }
            }
            let f_hi = net.hidden_features(&u_hi).unwrap()[j];
            let f_lo = net.hidden_features(&u_lo).unwrap()[j];
            assert_relative_eq!(hidden.get(j).hi(), f_hi, epsilon = 1e-12);
            assert_relative_eq!(hidden.get(j).lo(), f_lo, epsilon = 1e-12);
        }
    }

    #[test]
    fn feature_matrix_widths_shrink_with_delta() {
        let net = toy_net();
        let inputs = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.5, -0.5, -1.0, 1.0, 0.3, 0.7]);
        let targets = DMatrix::zeros(4, 2);
        let data = Dataset::new(inputs, targets).unwrap();

        // Mean value theorem: entry widths are at most
        // max_slope * (2 delta) * (l1 norm of the weight row).
        let row_sum = (0..net.n1())
            .map(|j| net.w1().row(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut widths = Vec::new();
        for delta in [1e-2, 1e-4, 1e-6] {
            let ud = UncertainDataset::from_uniform_delta(&data, delta).unwrap();
            let h = hidden_interval_matrix(&net, &ud).unwrap();
            let w = h.max_width();
            assert!(w <= net.hidden_activation().max_slope() * 2.0 * delta * row_sum + 1e-15);
            widths.push(w);
        }
        assert!(widths[0] > widths[1] && widths[1] > widths[2]);
    }

    #[test]
    fn degenerate_boxes_reproduce_point_features() {
        let net = toy_net();
        let inputs = DMatrix::from_row_slice(3, 2, &[0.2, 0.1, -0.4, 0.9, 1.1, -0.3]);
        let data = Dataset::new(inputs.clone(), DMatrix::zeros(3, 2)).unwrap();
        let ud = UncertainDataset::from_uniform_delta(&data, 0.0).unwrap();
        let h = hidden_interval_matrix(&net, &ud).unwrap();
        assert_eq!(h.max_width(), 0.0);
        for i in 0..3 {
            let f = net.hidden_features(&inputs.row(i).transpose()).unwrap();
            for j in 0..net.n1() {
                assert_eq!(h.get(j, i).lo(), f[j]);
            }
        }
    }

    #[test]
    fn output_radius_matches_hand_computation_for_linear_net() {
        // Identity activations make the whole net affine, so the output
        // radius follows from |W2 W1| acting on the input radii.
        let w1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let net = ShallowNet::new(
            w1,
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[3.0, 1.0]),
            DVector::zeros(1),
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        let data = Dataset::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let ud = UncertainDataset::from_uniform_delta(&data, 0.1).unwrap();
        // Composite row is [3, -2]; radius = (3 + 2) * 0.1 per sample.
        let r = output_radius(&net, &ud).unwrap();
        assert_relative_eq!(r, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn uncertain_dataset_rejects_negative_radii() {
        let data = Dataset::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let radii = DMatrix::from_element(2, 2, -0.5);
        assert!(UncertainDataset::new(data.inputs.clone(), radii, data.targets).is_err());
    }
}
