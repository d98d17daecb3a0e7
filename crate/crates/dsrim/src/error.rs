use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced while loading data or running the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed row in a tabular or line-delimited input.
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    /// A reference to an id that does not exist in the target collection.
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    /// An id that must be unique appeared twice.
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An invalid parameter combination, caught before any work is done.
    #[error("configuration error: {0}")]
    Config(String),

    /// A required embedding vector is absent from the table.
    #[error("missing vector for `{0}`")]
    MissingVector(String),

    /// A NaN or infinity surfaced mid-computation.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn parse(source_name: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
