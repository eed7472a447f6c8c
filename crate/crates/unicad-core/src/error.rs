//! Crate-wide error type.

use thiserror::Error;

/// All fallible operations in this crate return `Result<T, Error>`.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input rejected before any compute (bad dims, oversize, bad labels, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A sequence does not fit the requested maximum length.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// An operation's contract was violated by the caller (e.g. all-masked row).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Binary codec failure; names the offending field.
    #[error("codec error in `{field}`: {reason}")]
    Codec { field: String, reason: String },

    /// Duplicate registration.
    #[error("conflict: {0}")]
    Conflict(String),

    /// Lookup of an unknown id.
    #[error("not found: {0}")]
    NotFound(String),

    /// Expert does not match the fingerprinted backbone.
    #[error("compatibility error: {0}")]
    Compatibility(String),

    /// Numeric failure during training (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// Metric domain error (e.g. zero baseline sums).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn codec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Codec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
