use std::path::PathBuf;

use crate::symbol::Symbol;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: index {index} out of range for extent {extent}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("{op}: domain error ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("variable belongs to a different tape")]
    Detached,

    #[error("distributions belong to different program contexts")]
    ContextMismatch,
    #[error("input registry is frozen; inputs must be registered before the first combining operation")]
    RegistryFrozen,
    #[error("registry batch extent {expected} does not match input batch extent {found}")]
    BatchMismatch { expected: usize, found: usize },
    #[error("duplicate symbol {0}")]
    DuplicateSymbol(Symbol),
    #[error("a distribution needs at least one symbol")]
    EmptySymbols,
    #[error("exact model counting refuses {inputs} inputs (limit {limit})")]
    RegistryTooLarge { inputs: usize, limit: usize },
    #[error("user function failed on {symbols:?}: {message}")]
    Udf {
        symbols: Vec<Symbol>,
        message: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),
    #[error("idx {path}: bad magic {found:#010x} (expected {expected:#010x})")]
    IdxBadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("idx {path}: truncated file (need {needed} bytes, have {have})")]
    IdxTruncated {
        path: PathBuf,
        needed: usize,
        have: usize,
    },
    #[error("idx: image count {images} does not match label count {labels}")]
    IdxCountMismatch { images: usize, labels: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
