//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by loaders, validators, and estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate id {id:?} (rows {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("row {row} ({id:?}) has {got} classes, expected {expected}")]
    ClassCountMismatch {
        row: usize,
        id: String,
        got: usize,
        expected: usize,
    },

    #[error("row {row} ({id:?}) has no annotations; pass drop_empty to skip such rows")]
    EmptyRow { row: usize, id: String },

    #[error("id {id:?} present in {present} but missing from {missing}")]
    UnmatchedId {
        id: String,
        present: &'static str,
        missing: &'static str,
    },

    #[error("{what}: {msg}")]
    InvalidValue { what: &'static str, msg: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
