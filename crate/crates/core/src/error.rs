//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Image or kernel dimensions do not match what the operation requires.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A kernel that must sum to one does not.
    #[error("kernel is not normalized (sum = {sum})")]
    KernelNotNormalized { sum: f64 },

    /// The input carries no usable data (empty list, all-zero mask, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// File or stream handling failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// PNG encoding or decoding failed.
    #[error("png: {0}")]
    Png(String),

    /// JSON (de)serialization failed.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// CSV (de)serialization failed.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
