use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while loading data or fitting an explanation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected \"FMX1\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{extra} trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite feature value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("non-binary attribute value {value} at row {row}, col {col}")]
    NonBinary { row: usize, col: usize, value: u64 },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("duplicate name {0:?}")]
    DuplicateName(String),

    #[error("row-count mismatch: {what} has {found} rows, expected {expected}")]
    RowMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("class index {value} out of range at row {row} (C = {classes})")]
    ClassOutOfRange {
        row: usize,
        value: u32,
        classes: usize,
    },

    #[error("too few samples to split: {0}")]
    TooFewSamples(usize),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("insufficient path: {0} points, need at least 3")]
    InsufficientPath(usize),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("divergence at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::UnknownDtype(_)
            | Error::DtypeMismatch { .. }
            | Error::Csv(_)
            | Error::Json(_) => "format",
            Error::NonFinite { .. } | Error::NonBinary { .. } => "data",
            Error::Shape(_)
            | Error::DuplicateName(_)
            | Error::RowMismatch { .. }
            | Error::ClassOutOfRange { .. }
            | Error::Schema(_) => "validation",
            Error::TooFewSamples(_)
            | Error::EmptySplit(_)
            | Error::InsufficientPath(_)
            | Error::InvalidArgument(_) => "argument",
            Error::Divergence { .. } => "numeric",
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}
