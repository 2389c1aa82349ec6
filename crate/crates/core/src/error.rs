use thiserror::Error;

use crate::dna::ValidationReport;

/// Errors produced by the planning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid DNA profile:\n{0}")]
    InvalidProfile(ValidationReport),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid index {index} out of range for grid of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("ordering violation: {0}")]
    Ordering(String),

    #[error("timestep {0} is not a point of the grid")]
    OffGrid(f64),

    #[error("infeasible plan: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid of {len} points exceeds the enumeration limit of {limit}")]
    GridTooLarge { len: usize, limit: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
