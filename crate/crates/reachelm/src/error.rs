use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid interval: lower bound {lo} exceeds upper bound {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument for {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    /// Every entry of the interval feature matrix is degenerate, so the
    /// robust program has no deviation terms. Callers usually fall back to a
    /// plain least-squares fit.
    #[error("interval matrix carries no uncertainty; robust training reduces to least squares")]
    NoUncertainty,

    #[error("brute-force enumeration supports at most {limit} deviation terms, got {actual}")]
    TooManyDeviations { limit: usize, actual: usize },

    #[error("SDP solver failed: {0}")]
    Solver(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("{path}:{line}: {msg}")]
    DataFormat {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
