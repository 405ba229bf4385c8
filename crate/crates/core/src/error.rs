use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Config,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {message}")]
    Wav { path: PathBuf, message: String },
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u16),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("single-class input: both classes are required")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible split: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("model is not trained: {0}")]
    Untrained(&'static str),
    #[error("container format: {0}")]
    Format(String),
    #[error("shape violation: {0}")]
    Shape(String),
    #[error("schema version mismatch: file has {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Infeasible(_) | Error::Untrained(_) => ErrorClass::Config,
            Error::Numerical(_) | Error::NotPositiveDefinite => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
