use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::io::FormatError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Core(#[from] raysense_core::Error),
    /// Bad flags or configuration.
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        match source {
            FormatError::Io(source) => Error::io(path, source),
            source => Error::Format {
                path: path.into(),
                source,
            },
        }
    }

    /// 2 for usage and configuration problems (including inputs that do
    /// not exist), 1 for everything that fails during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            _ => 1,
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
