use thiserror::Error;

use crate::driver::DriverTrace;

pub type Result<T> = std::result::Result<T, LassoError>;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("{solver} does not support the {kind} objective")]
    UnsupportedKind { solver: &'static str, kind: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("every candidate in the grid failed to fit")]
    NoValidCandidate,

    /// An inner solve failed part-way through an active-set run.
    #[error("active-set run failed after {} outer iterations: {source}", trace.iterations.len())]
    Driver {
        source: Box<LassoError>,
        trace: Box<DriverTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
