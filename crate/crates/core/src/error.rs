//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Shape or configuration mismatch (wrong dims, invalid hyperparameter).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid domain-level input (empty dataset, bad fraction, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {msg} (batch index {index})")]
    Numeric { msg: String, index: usize },

    /// Binary format violation while parsing an input file.
    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    /// Training was requested on an empty subset.
    #[error("empty subset: {0}")]
    EmptySubset(String),

    /// A compute budget was already exhausted or too small to start.
    #[error("budget error: {0}")]
    Budget(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
}
