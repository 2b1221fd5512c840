use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("expected {expected} samples, found {found}")]
    SampleCount { expected: usize, found: usize },
    #[error("P(sigma) is singular at sigma = {sigma}")]
    SingularShift { sigma: f64 },
    #[error("inner solve stalled at relative residual {achieved:.3e} (requested {requested:.3e}) after {iterations} iterations")]
    InnerFailure {
        achieved: f64,
        requested: f64,
        iterations: usize,
    },
    #[error("true residual unavailable: problem is given by node samples only")]
    TrueResidualUnavailable,
    #[error("diagnostic data missing: {0}")]
    MissingDiagnostics(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
