//! Planar two-joint arm: forward kinematics, joint-space safety zones, and
//! seeded dataset generation for the benchmark.
//!
//! Joint angles live in `[0, 2 pi)`. The safety zones partition the joint
//! square: the normal operating region is the square where both angles lie
//! in `[5 pi / 12, 7 pi / 12]`, the buffering region widens both ranges to
//! `[pi / 3, 2 pi / 3]` minus the normal square, and everything else is
//! forbidden.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reach::Dataset;

const NORMAL_LO: f64 = 5.0 * PI / 12.0;
const NORMAL_HI: f64 = 7.0 * PI / 12.0;
const BUFFER_LO: f64 = PI / 3.0;
const BUFFER_HI: f64 = 2.0 * PI / 3.0;

/// Link lengths of the arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmGeometry {
    pub l1: f64,
    pub l2: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry { l1: 1.0, l2: 1.0 }
    }
}

impl ArmGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1.is_finite() && self.l2.is_finite() && self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(Error::InvalidArgument {
                name: "geometry",
                reason: format!("link lengths must be positive, got ({}, {})", self.l1, self.l2),
            });
        }
        Ok(())
    }

    /// Largest reachable distance from the base.
    pub fn reach_max(&self) -> f64 {
        self.l1 + self.l2
    }

    /// Smallest reachable distance from the base.
    pub fn reach_min(&self) -> f64 {
        (self.l1 - self.l2).abs()
    }
}

/// Joint-space safety zones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Normal,
    Buffering,
    Forbidden,
}

impl Zone {
    pub fn name(self) -> &'static str {
        match self {
            Zone::Normal => "normal",
            Zone::Buffering => "buffering",
            Zone::Forbidden => "forbidden",
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Zone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Zone::Normal),
            "buffering" => Ok(Zone::Buffering),
            "forbidden" => Ok(Zone::Forbidden),
            other => Err(Error::InvalidArgument {
                name: "zone",
                reason: format!("unknown zone {other:?} (expected normal, buffering, or forbidden)"),
            }),
        }
    }
}

/// End-effector position for joint angles `(theta1, theta2)`, with
/// `theta2` measured relative to the first link.
pub fn forward_kinematics(geom: &ArmGeometry, theta1: f64, theta2: f64) -> (f64, f64) {
    let x = geom.l1 * theta1.cos() + geom.l2 * (theta1 + theta2).cos();
    let y = geom.l1 * theta1.sin() + geom.l2 * (theta1 + theta2).sin();
    (x, y)
}

fn wrap_angle(t: f64) -> f64 {
    t.rem_euclid(2.0 * PI)
}

/// Classifies a joint configuration; angles are wrapped into `[0, 2 pi)`
/// first. The normal square takes precedence on shared boundaries.
pub fn classify_zone(theta1: f64, theta2: f64) -> Zone {
    let (t1, t2) = (wrap_angle(theta1), wrap_angle(theta2));
    let in_band = |t: f64, lo: f64, hi: f64| (lo..=hi).contains(&t);
    if in_band(t1, NORMAL_LO, NORMAL_HI) && in_band(t2, NORMAL_LO, NORMAL_HI) {
        Zone::Normal
    } else if in_band(t1, BUFFER_LO, BUFFER_HI) && in_band(t2, BUFFER_LO, BUFFER_HI) {
        Zone::Buffering
    } else {
        Zone::Forbidden
    }
}

/// Draws `n` joint configurations uniformly from `zone` (rejection
/// sampling for the non-rectangular zones) and pairs them with their
/// end-effector positions: inputs are `(theta1, theta2)` rows, targets
/// `(x, y)` rows. A fixed seed reproduces the dataset exactly.
pub fn sample_dataset(geom: &ArmGeometry, zone: Zone, n: usize, seed: u64) -> Result<Dataset> {
    geom.validate()?;
    if n == 0 {
        return Err(Error::EmptyData("dataset generation needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = DMatrix::zeros(n, 2);
    let mut targets = DMatrix::zeros(n, 2);
    for i in 0..n {
        let (t1, t2) = match zone {
            Zone::Normal => (
                rng.random_range(NORMAL_LO..NORMAL_HI),
                rng.random_range(NORMAL_LO..NORMAL_HI),
            ),
            Zone::Buffering => loop {
                let t1 = rng.random_range(BUFFER_LO..BUFFER_HI);
                let t2 = rng.random_range(BUFFER_LO..BUFFER_HI);
                if classify_zone(t1, t2) == Zone::Buffering {
                    break (t1, t2);
                }
            },
            Zone::Forbidden => loop {
                let t1 = rng.random_range(0.0..2.0 * PI);
                let t2 = rng.random_range(0.0..2.0 * PI);
                if classify_zone(t1, t2) == Zone::Forbidden {
                    break (t1, t2);
                }
            },
        };
        let (x, y) = forward_kinematics(geom, t1, t2);
        inputs[(i, 0)] = t1;
        inputs[(i, 1)] = t2;
        targets[(i, 0)] = x;
        targets[(i, 1)] = y;
    }
    Dataset::new(inputs, targets)
}
