use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid market: {0}")]
    InvalidMarket(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unresolved reference: {0}")]
    Reference(String),

    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),

    #[error("too many block bids for enumeration: {count} (limit {limit})")]
    TooManyBlocks { count: usize, limit: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("inconsistent report: {0}")]
    InconsistentReport(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
