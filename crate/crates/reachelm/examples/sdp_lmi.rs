//! Solve a small semidefinite program directly: find the range of the
//! missing entry of a 3x3 correlation matrix.
//!
//! With unit diagonal and known correlations r12 = 0.6, r23 = -0.4, the
//! set of values x = r13 keeping the matrix positive semidefinite is an
//! interval; minimizing x and -x over the LMI constraint finds both ends.

use nalgebra::DVector;
use reachelm::sdp::{solve, LmiProblem, SolverOptions, SparseSymMat};

fn correlation_problem(minimize_upper: bool) -> reachelm::Result<LmiProblem> {
    let f0 = SparseSymMat::from_triplets(
        3,
        &[
            (0, 0, 1.0),
            (1, 1, 1.0),
            (2, 2, 1.0),
            (0, 1, 0.6),
            (1, 2, -0.4),
        ],
    )?;
    let f1 = SparseSymMat::from_triplets(3, &[(0, 2, 1.0)])?;
    let sign = if minimize_upper { -1.0 } else { 1.0 };
    LmiProblem::new(DVector::from_vec(vec![sign]), f0, vec![f1], None)
}

fn main() -> reachelm::Result<()> {
    let opts = SolverOptions::default();
    let lo = solve(&correlation_problem(false)?, &opts, None)?;
    let hi = solve(&correlation_problem(true)?, &opts, None)?;

    println!(
        "feasible r13 range: [{:+.6}, {:+.6}]",
        lo.x[0], hi.x[0]
    );
    println!(
        "solver: {:?} / {:?}, {} + {} iterations",
        lo.status, hi.status, lo.iterations, hi.iterations
    );

    // Analytic check: the 3x3 determinant is quadratic in r13 and its
    // roots bound the PSD interval, r12 r23 +- sqrt((1-r12^2)(1-r23^2)).
    let (r12, r23) = (0.6_f64, -0.4_f64);
    let mid = r12 * r23;
    let half = ((1.0 - r12 * r12) * (1.0 - r23 * r23)).sqrt();
    println!(
        "analytic range:     [{:+.6}, {:+.6}]",
        mid - half,
        mid + half
    );
    assert!((lo.x[0] - (mid - half)).abs() < 1e-5);
    assert!((hi.x[0] - (mid + half)).abs() < 1e-5);

    // Certificates at the returned points.
    println!(
        "min eigenvalue at the two optima: {:.2e}, {:.2e}",
        lo.min_eig, hi.min_eig
    );
    Ok(())
}
