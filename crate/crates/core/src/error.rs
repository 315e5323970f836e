use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding an IDX container.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX data: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported image dimensions {rows}x{cols} (expected 28x28)")]
    BadDimensions { rows: u32, cols: u32 },
    #[error("{extra} unexpected bytes after the declared payload")]
    TrailingBytes { extra: usize },
    #[error("label {label} at index {index} is outside 0..=9")]
    BadLabel { index: usize, label: u8 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid prune plan: {0}")]
    Plan(String),
    #[error("IDX parse error in {context}")]
    Idx {
        context: String,
        #[source]
        source: IdxError,
    },
    #[error("model file has wrong magic (not a dprune model)")]
    ModelMagic,
    #[error("unsupported model file version {0}")]
    ModelVersion(u32),
    #[error("model file shape mismatch: {0}")]
    ModelShape(String),
    #[error("corrupt model file: {0}")]
    ModelCorrupt(String),
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
