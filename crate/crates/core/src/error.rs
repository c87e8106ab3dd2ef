use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes of checkpoint decoding. Each corresponds to a distinct
/// class of on-disk damage.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("checkpoint tensor `{name}` has shape {found:?}, spec requires {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint tensor `{name}` offset mismatch: {detail}")]
    OffsetMismatch { name: String, detail: String },
    #[error("checkpoint data truncated: header declares {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("checkpoint checksum mismatch: header {expected:08x}, data {found:08x}")]
    Checksum { expected: u32, found: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("not a binary PPM (P6) file")]
    BadMagic,
    #[error("PPM dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported PPM: {0}")]
    Unsupported(String),
    #[error("PPM payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("stale or mismatched cache: {0}")]
    StaleCache(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown model id `{0}`")]
    UnknownModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("{0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the CLI: 2 configuration, 3 I/O, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownModel(_) => 2,
            Error::Io { .. } => 3,
            Error::Shape(_)
            | Error::StaleCache(_)
            | Error::Image { .. }
            | Error::Checkpoint(_)
            | Error::Manifest { .. }
            | Error::Data(_)
            | Error::Json(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
