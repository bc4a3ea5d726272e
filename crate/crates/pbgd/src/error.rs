//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller-supplied value (dimension mismatch, unknown name, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A documented precondition does not hold (infeasible point, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Algorithm and problem disagree on the constraint regime.
    #[error("unsupported problem: {0}")]
    Unsupported(String),

    /// Non-finite value produced during iteration.
    #[error("numerical failure: {message} (offending iterate: {iterate:?})")]
    Numerical {
        message: String,
        iterate: Option<Vec<f64>>,
    },

    /// CSV/config ingestion failure with source location.
    #[error("ingestion error at line {line}, column {column}: {message}")]
    Ingestion {
        line: usize,
        column: usize,
        message: String,
    },

    /// Dataset-level problem (non-binary labels, empty split, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Config file problem with a line-precise message.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, iterate: Option<&[f64]>) -> Self {
        Error::Numerical {
            message: msg.into(),
            iterate: iterate.map(|s| s.to_vec()),
        }
    }
}
