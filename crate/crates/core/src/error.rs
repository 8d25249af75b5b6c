use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected \"OCLF\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated feature file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("feature file has {actual} bytes but header implies {expected}")]
    LengthMismatch { expected: u64, actual: u64 },

    #[error("row {index} out of range (n_samples = {n_samples})")]
    RowOutOfRange { index: u64, n_samples: u64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty train split")]
    EmptyTrainSplit,

    #[error("missing group metadata for sample {0}")]
    MissingGroup(u64),

    #[error("class {class} has {available} train samples, need at least {required}")]
    InsufficientSamples {
        class: u32,
        available: usize,
        required: usize,
    },

    #[error("empty pool: no evaluation samples after filtering")]
    EmptyPool,

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("no memory model available for learner {0}")]
    NoMemoryModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
