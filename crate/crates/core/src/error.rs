use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("edge list {0} contains no edges")]
    EmptyGraph(PathBuf),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("embedding format version mismatch: expected EED1, found {0:?}")]
    VersionMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operation requires the {expected} model, got {found}")]
    WrongModel { expected: String, found: String },
    #[error("row {row} of {matrix} has zero norm")]
    ZeroRow { matrix: &'static str, row: usize },
    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(&'static str),
    #[error("dense check over {n} nodes exceeds the cap of {cap}; use the KD-tree check")]
    DenseCapExceeded { n: usize, cap: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
