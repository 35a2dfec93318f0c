use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP:\n{0}")]
    InvalidMdp(ValidationReport),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid batch schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value at state {state} after {iteration} operator applications")]
    NonFinite { iteration: usize, state: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("fixed-point residual {residual:e} exceeds {limit:e}")]
    Residual { residual: f64, limit: f64 },

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
