use num_complex::Complex64;
use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("covariance matrix ({size}x{size}) not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { size: usize, jitter: f64 },

    #[error("pair is not stabilizable: mode {eigenvalue} cannot be reached by the input")]
    NotStabilizable { eigenvalue: Complex64 },

    #[error("pair is not detectable: mode {eigenvalue} is invisible to the output")]
    NotDetectable { eigenvalue: Complex64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("{what} did not converge in {iterations} iterations (residual trace {trace:?})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("time {0} is not a grid point")]
    OffGrid(f64),

    #[error("predictor rejected: {0}")]
    Predictor(String),

    #[error(
        "controlled rough integral not admissible: (2 + {integrand}) * {driver} <= 1"
    )]
    Regularity { integrand: f64, driver: f64 },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
