use std::path::PathBuf;

use thiserror::Error;

use crate::linsolve::SolveReport;

pub type Result<T, E = ChbError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ChbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid time partition: {0}")]
    InvalidTime(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("derivative order {order} out of range (max {max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("conjugate gradient did not converge: {report}")]
    NotConverged { report: SolveReport },

    #[error("singular linear system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<ChbError>,
    },

    #[error("line search found no acceptable step in {trials} trials")]
    LineSearchFailed { trials: usize },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ChbError {
    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        ChbError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ ChbError::StepFailed { .. } => e,
            e => ChbError::StepFailed {
                step,
                source: Box::new(e),
            },
        }
    }
}
