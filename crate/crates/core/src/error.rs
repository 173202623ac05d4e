use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("ordering error at row {row}: time {time} precedes {previous}")]
    Ordering { row: usize, time: f64, previous: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state space too large: N = {n_pop} exceeds cap {cap} (raise the cap or reduce N)")]
    StateSpaceTooLarge { n_pop: usize, cap: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn params(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
