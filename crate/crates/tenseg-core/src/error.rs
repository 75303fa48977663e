//! Crate-wide error type.

use std::fmt;

/// Errors produced by tensor construction, decomposition, detection, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum TensegError {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Shapes or lengths of two inputs do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A numeric routine failed (non-finite values, non-PD matrix, residual blowup).
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A file had the wrong magic, header, or field layout.
    #[error("parse error: {0}")]
    Parse(String),
}

impl TensegError {
    pub fn invalid_argument(msg: impl fmt::Display) -> Self {
        TensegError::InvalidArgument(msg.to_string())
    }

    pub fn dimension_mismatch(msg: impl fmt::Display) -> Self {
        TensegError::DimensionMismatch(msg.to_string())
    }

    pub fn numeric(msg: impl fmt::Display) -> Self {
        TensegError::Numeric(msg.to_string())
    }

    pub fn parse(msg: impl fmt::Display) -> Self {
        TensegError::Parse(msg.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TensegError>;
