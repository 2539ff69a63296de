//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between two operands; names both shapes.
    #[error("shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Shape {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// An input failed a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// An internal invariant that valid inputs cannot trigger was violated.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A computation produced or encountered a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Cross-entropy was asked to average over zero supervised positions.
    #[error("empty supervision")]
    EmptySupervision,

    /// Config file parsing or validation failed.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint encode/decode failed.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Report CSV encode/decode failed.
    #[error("report error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
