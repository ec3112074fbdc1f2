use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalues must be sorted in descending order (violation at index {0})")]
    Unsorted(usize),

    #[error("need at least 2 observations, got {0}")]
    TooFewSamples(usize),

    #[error("epsilon1 = {value} >= 1: sample too small for calibrated c1")]
    SampleTooSmall { value: f64 },

    #[error("polynomial-decay spectrum violates {bound} at index k = {index}")]
    DecayViolation { bound: &'static str, index: usize },

    #[error("Karhunen-Loeve truncation stopped at depth {depth} with tail mass {tail:e}")]
    Truncation { depth: usize, tail: f64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed data file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
