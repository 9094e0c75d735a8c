use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input outside the domain: {0}")]
    InputDomain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver did not certify its solution after {iterations} iterations (best gap bound {best_gap:e})")]
    Convergence { iterations: usize, best_gap: f64 },
    #[error("target {target} outside the achievable range [{low}, {high}]")]
    Range { target: f64, low: f64, high: f64 },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
