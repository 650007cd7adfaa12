use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("need at least {min} classes, got {found}")]
    TooFewClasses { min: usize, found: usize },

    #[error("not a simplex point: {0}")]
    NotInSimplex(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("label {label} outside 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite training loss in epoch {epoch}, batch {batch} (rows {first_row}..={last_row})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        first_row: usize,
        last_row: usize,
    },

    #[error("variable {index} does not belong to this tape (length {len})")]
    ForeignVariable { index: usize, len: usize },

    #[error("model file format version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
