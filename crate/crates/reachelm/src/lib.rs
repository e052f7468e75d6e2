//! Interval reachability and robust training for one-hidden-layer
//! feedforward networks.
//!
//! The crate has three layers:
//!
//! * [`interval`] and [`reach`] compute exact per-coordinate interval
//!   enclosures of a shallow network's hidden and output layers when the
//!   inputs are only known up to a box.
//! * [`elm`] and [`robust`] fit the linear output layer of such a network:
//!   `elm` by ordinary (optionally ridge-regularized) least squares on
//!   point features, `robust` by minimizing a certified upper bound on the
//!   worst-case squared residual over all inputs in their boxes, solved as
//!   a semidefinite program.
//! * [`sdp`] is the self-contained dense SDP solver behind `robust`, and
//!   [`robotarm`] generates the planar two-joint arm datasets used by the
//!   examples and the benchmark.
//!
//! The `examples/` directory walks through each capability; the `reachelm`
//! binary exposes dataset generation, training, reachability export, and
//! the benchmark as subcommands.

pub mod cli;
pub mod elm;
pub mod error;
pub mod interval;
pub mod reach;
pub mod robotarm;
pub mod robust;
pub mod sdp;

pub use error::{Error, Result};
pub use interval::{Activation, Interval, IntervalMatrix, IntervalVector};
pub use reach::{Dataset, ShallowNet, UncertainDataset};
