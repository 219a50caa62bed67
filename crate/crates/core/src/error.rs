use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or missing input data (files, manifests, labels, shapes).
    Data,
    /// Failure while computing on otherwise valid data.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected \"PRBE\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported PRBE version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported PRBE dtype code {0}")]
    UnsupportedDtype(u16),

    #[error("truncated payload: header declares {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("missing manifest entry for split {split}, layer {layer}")]
    MissingEntry { split: String, layer: u16 },

    #[error("row count mismatch: {what} has {left} rows, {other} has {right}")]
    RowMismatch {
        what: &'static str,
        left: usize,
        other: &'static str,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("clustering: {0}")]
    Cluster(String),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("missing cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Insufficient(_) | Error::Cluster(_) => ErrorClass::Runtime,
            _ => ErrorClass::Data,
        }
    }
}
