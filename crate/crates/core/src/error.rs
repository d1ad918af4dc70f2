use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} is outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("infeasible allocation: target return {target} exceeds the {available} data points available")]
    Infeasible { target: f64, available: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: malformed IDX data at byte offset {offset}: {reason}", path.display())]
    Idx {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed parity file: {0}")]
    Parity(String),

    #[error("failed to write trace: {0}")]
    Trace(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
