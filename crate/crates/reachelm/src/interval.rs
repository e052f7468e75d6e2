//! Closed-interval arithmetic for the handful of operations the reachability
//! analysis needs: signed scalar products, affine maps, and monotone
//! activation functions evaluated at interval endpoints.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A closed, bounded, non-empty interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("interval endpoint"));
        }
        if lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Result<Self> {
        Interval::new(x, x)
    }

    /// Builds `[center - radius, center + radius]`; `radius` must be >= 0.
    pub fn centered(center: f64, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "radius",
                reason: format!("must be non-negative, got {radius}"),
            });
        }
        Interval::new(center - radius, center + radius)
    }

    /// Endpoint order is established by the constructor, so these accessors
    /// always satisfy `lo() <= hi()`.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Whether `other` lies entirely inside `self`.
    pub fn encloses(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Constructor for results of operations that are exact by
    /// construction. Sorts the endpoints instead of failing, which guards
    /// against last-ulp non-monotonicity in libm functions.
    fn from_unordered(a: f64, b: f64) -> Interval {
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A box in R^n: one interval per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    entries: Vec<Interval>,
}

impl IntervalVector {
    pub fn new(entries: Vec<Interval>) -> Self {
        IntervalVector { entries }
    }

    /// The box `[center - delta, center + delta]` with per-coordinate radii.
    pub fn from_center_radius(center: &DVector<f64>, radius: &DVector<f64>) -> Result<Self> {
        if center.len() != radius.len() {
            return Err(Error::dims(
                "IntervalVector::from_center_radius",
                format!("radius of length {}", center.len()),
                format!("{}", radius.len()),
            ));
        }
        let entries = center
            .iter()
            .zip(radius.iter())
            .map(|(&c, &r)| Interval::centered(c, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntervalVector { entries })
    }

    /// Degenerate box containing exactly `point`.
    pub fn from_point(point: &DVector<f64>) -> Result<Self> {
        let entries = point
            .iter()
            .map(|&x| Interval::point(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntervalVector { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Interval {
        self.entries[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.entries.iter()
    }

    pub fn lower(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.lo))
    }

    pub fn upper(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.hi))
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.center()))
    }

    pub fn radius(&self) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|e| e.radius()))
    }

    pub fn contains_point(&self, x: &DVector<f64>) -> bool {
        x.len() == self.entries.len()
            && self.entries.iter().zip(x.iter()).all(|(e, &v)| e.contains(v))
    }

    pub fn encloses(&self, other: &IntervalVector) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|(a, b)| a.encloses(b))
    }
}

/// A matrix whose entries are intervals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> Interval) -> Self {
        let mut entries = Vec::with_capacity(nrows * ncols);
        for r in 0..nrows {
            for c in 0..ncols {
                entries.push(f(r, c));
            }
        }
        IntervalMatrix { nrows, ncols, entries }
    }

    /// Assembles a matrix from per-column boxes; every column must have
    /// length `nrows`.
    pub fn from_columns(nrows: usize, columns: &[IntervalVector]) -> Result<Self> {
        for (i, col) in columns.iter().enumerate() {
            if col.len() != nrows {
                return Err(Error::dims(
                    "IntervalMatrix::from_columns",
                    format!("column of length {nrows}"),
                    format!("{} (column {i})", col.len()),
                ));
            }
        }
        Ok(IntervalMatrix::from_fn(nrows, columns.len(), |r, c| {
            columns[c].get(r)
        }))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, r: usize, c: usize) -> Interval {
        self.entries[r * self.ncols + c]
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.get(r, c).lo())
    }

    pub fn upper(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.get(r, c).hi())
    }

    pub fn center(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |r, c| self.get(r, c).center())
    }

    pub fn max_width(&self) -> f64 {
        self.entries.iter().map(|e| e.width()).fold(0.0, f64::max)
    }

    /// Whether the point matrix `m` lies inside the interval matrix.
    pub fn contains_matrix(&self, m: &DMatrix<f64>) -> bool {
        m.nrows() == self.nrows
            && m.ncols() == self.ncols
            && (0..self.nrows).all(|r| (0..self.ncols).all(|c| self.get(r, c).contains(m[(r, c)])))
    }
}

/// The scalar activations supported by the network types. All of them are
/// non-decreasing, which is what makes endpoint evaluation of interval
/// images exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// A global bound on the derivative, used to bound how fast interval
    /// images can widen.
    pub fn max_slope(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument {
                name: "activation",
                reason: format!("unknown activation {other:?} (expected sigmoid, tanh, relu, or identity)"),
            }),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact range of `w * x` for `x` in the interval: the weight's sign decides
/// which endpoint attains each bound.
pub fn signed_term_bounds(w: f64, x: Interval) -> Interval {
    if w >= 0.0 {
        Interval {
            lo: w * x.lo,
            hi: w * x.hi,
        }
    } else {
        Interval {
            lo: w * x.hi,
            hi: w * x.lo,
        }
    }
}

/// Exact interval image of the affine map `W x + b` over a box. Each output
/// row is independent, so summing the signed term bounds per row is exact,
/// not just sound.
pub fn interval_affine(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &IntervalVector,
) -> Result<IntervalVector> {
    if w.ncols() != x.len() {
        return Err(Error::dims(
            "interval_affine",
            format!("input box of length {}", w.ncols()),
            format!("{}", x.len()),
        ));
    }
    if w.nrows() != b.len() {
        return Err(Error::dims(
            "interval_affine",
            format!("bias of length {}", w.nrows()),
            format!("{}", b.len()),
        ));
    }
    let mut out = Vec::with_capacity(w.nrows());
    for r in 0..w.nrows() {
        let mut lo = b[r];
        let mut hi = b[r];
        for c in 0..w.ncols() {
            let t = signed_term_bounds(w[(r, c)], x.get(c));
            lo += t.lo;
            hi += t.hi;
        }
        // Term-wise lo <= hi and float addition is monotone, so the order
        // survives the summation.
        out.push(Interval { lo, hi });
    }
    Ok(IntervalVector::new(out))
}

/// Image of a box under an entrywise non-decreasing activation; evaluating
/// at the endpoints is exact.
pub fn apply_activation(act: Activation, x: &IntervalVector) -> IntervalVector {
    IntervalVector::new(
        x.iter()
            .map(|e| Interval::from_unordered(act.apply(e.lo), act.apply(e.hi)))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn interval_rejects_reversed_and_nonfinite_endpoints() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        let i = Interval::new(-1.0, 2.0).unwrap();
        assert_eq!(i.width(), 3.0);
        assert_eq!(i.center(), 0.5);
        assert_eq!(i.radius(), 1.5);
        assert!(i.contains(-1.0) && i.contains(2.0) && !i.contains(2.0001));
    }

    #[test]
    fn signed_term_bounds_matches_sign_split() {
        let unit = Interval::new(0.0, 1.0).unwrap();
        let b = signed_term_bounds(2.0, unit);
        assert_eq!((b.lo(), b.hi()), (0.0, 2.0));

        let b = signed_term_bounds(-1.0, unit);
        assert_eq!((b.lo(), b.hi()), (-1.0, 0.0));

        let b = signed_term_bounds(0.0, Interval::new(-5.0, 7.0).unwrap());
        assert_eq!((b.lo(), b.hi()), (0.0, 0.0));
    }

    #[test]
    fn sigmoid_image_of_symmetric_interval() {
        let x = IntervalVector::new(vec![Interval::new(-1.0, 1.0).unwrap()]);
        let img = apply_activation(Activation::Sigmoid, &x);
        // Endpoints computed directly from the logistic function.
        let lo = 1.0 / (1.0 + 1.0f64.exp());
        assert_relative_eq!(img.get(0).lo(), lo, max_relative = 1e-12);
        assert_relative_eq!(img.get(0).hi(), 1.0 - lo, max_relative = 1e-12);
        assert!((img.get(0).lo() - 0.26894).abs() < 1e-5);
        assert!((img.get(0).hi() - 0.73106).abs() < 1e-5);
    }

    #[test]
    fn affine_image_matches_corner_enumeration() {
        let w = DMatrix::from_row_slice(1, 2, &[2.0, -3.0]);
        let b = DVector::from_row_slice(&[1.0]);
        let x = IntervalVector::new(vec![
            Interval::new(-1.0, 1.0).unwrap(),
            Interval::new(0.0, 2.0).unwrap(),
        ]);
        let img = interval_affine(&w, &b, &x).unwrap();

        // Oracle: row-wise affine maps attain their extrema at corners of
        // the box, so enumerate all four.
        let mut best = (f64::INFINITY, f64::NEG_INFINITY);
        for &x0 in &[-1.0, 1.0] {
            for &x1 in &[0.0, 2.0] {
                let v = 2.0 * x0 - 3.0 * x1 + 1.0;
                best = (best.0.min(v), best.1.max(v));
            }
        }
        assert_eq!((img.get(0).lo(), img.get(0).hi()), best);
        assert_eq!((img.get(0).lo(), img.get(0).hi()), (-7.0, 3.0));
    }

    #[test]
    fn affine_dimension_mismatch_is_reported() {
        let w = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_row_slice(&[0.0]);
        let x = IntervalVector::new(vec![Interval::point(0.0).unwrap()]);
        assert!(matches!(
            interval_affine(&w, &b, &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn affine_image_is_sound_under_sampling() {
        let mut rng = StdRng::seed_from_u64(7);
        let w = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-2.0..2.0));
        let b = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let x = IntervalVector::new(
            (0..4)
                .map(|_| {
                    let c: f64 = rng.random_range(-1.0..1.0);
                    let r: f64 = rng.random_range(0.0..0.5);
                    Interval::new(c - r, c + r).unwrap()
                })
                .collect(),
        );
        let img = interval_affine(&w, &b, &x).unwrap();
        let act_img = apply_activation(Activation::Tanh, &img);
        for _ in 0..10_000 {
            let point = DVector::from_fn(4, |i, _| {
                let e = x.get(i);
                rng.random_range(e.lo()..=e.hi())
            });
            let v = &w * &point + &b;
            assert!(img.contains_point(&v));
            assert!(act_img.contains_point(&v.map(|t| t.tanh())));
        }
    }

    proptest! {
        #[test]
        fn signed_term_bounds_is_exact(w in -10.0f64..10.0, a in -5.0f64..5.0, d in 0.0f64..5.0) {
            let x = Interval::new(a, a + d).unwrap();
            let b = signed_term_bounds(w, x);
            // Both bounds are attained at an endpoint of x.
            let at_lo = w * x.lo();
            let at_hi = w * x.hi();
            prop_assert_eq!(b.lo(), at_lo.min(at_hi));
            prop_assert_eq!(b.hi(), at_lo.max(at_hi));
        }

        #[test]
        fn wider_inputs_give_wider_images(
            c in proptest::collection::vec(-2.0f64..2.0, 3),
            r1 in proptest::collection::vec(0.0f64..0.5, 3),
            grow in proptest::collection::vec(0.0f64..0.5, 3),
            w in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let wm = DMatrix::from_row_slice(2, 3, &w);
            let b = DVector::zeros(2);
            let narrow = IntervalVector::new(
                (0..3).map(|i| Interval::centered(c[i], r1[i]).unwrap()).collect(),
            );
            let wide = IntervalVector::new(
                (0..3).map(|i| Interval::centered(c[i], r1[i] + grow[i]).unwrap()).collect(),
            );
            let img_n = interval_affine(&wm, &b, &narrow).unwrap();
            let img_w = interval_affine(&wm, &b, &wide).unwrap();
            prop_assert!(img_w.encloses(&img_n));
            let act_n = apply_activation(Activation::Sigmoid, &img_n);
            let act_w = apply_activation(Activation::Sigmoid, &img_w);
            prop_assert!(act_w.encloses(&act_n));
        }

        #[test]
        fn activation_images_stay_sound(
            lo in -4.0f64..4.0,
            d in 0.0f64..4.0,
            t in 0.0f64..1.0,
        ) {
            let x = Interval::new(lo, lo + d).unwrap();
            let point = lo + t * d;
            for act in [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity] {
                let img = apply_activation(act, &IntervalVector::new(vec![x]));
                prop_assert!(img.get(0).contains(act.apply(point)));
            }
        }
    }
}
