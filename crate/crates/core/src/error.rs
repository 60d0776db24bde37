use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Error, Debug)]
pub enum Error {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("version mismatch in {path}: expected {expected}, found {found}")]
    Version {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("external tool failed: {0}")]
    External(String),
    #[error("incompatible checkpoints: {0}")]
    Incompatible(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Incompatible(_) | Error::Version { .. } => ErrorKind::Config,
            Error::NonFinite(_) => ErrorKind::Numeric,
            Error::Io { .. } | Error::Image(_) | Error::Csv(_) => ErrorKind::Io,
            Error::External(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: &Path, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

/// Attaches a path to `std::io::Error`s.
pub(crate) trait IoContext<T> {
    fn with_path(self, action: &str, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn with_path(self, action: &str, path: &Path) -> Result<T> {
        self.map_err(|e| Error::io(format!("{action} {}", path.display()), e))
    }
}
