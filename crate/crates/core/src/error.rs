use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ply parse error at header line {line}: {message}")]
    PlyParse { line: usize, message: String },
    #[error("ply schema error: {0}")]
    PlySchema(String),
    #[error("tensor magic mismatch: expected \"GPBT\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor version {0}")]
    BadVersion(u32),
    #[error("truncated tensor payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("non-finite value at step {step} in parameter group `{group}`")]
    NonFinite { step: usize, group: String },
    #[error("degenerate trajectory at sample {sample}: {message}")]
    Trajectory { sample: usize, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
