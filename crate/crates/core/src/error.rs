use std::io;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("group `{group}` has {originals} original records, expected exactly 1")]
    GroupOriginals { group: String, originals: usize },

    #[error("example `{0}` has no gold labels")]
    MissingGold(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures that originate in the optimizer or arithmetic rather
    /// than in the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
