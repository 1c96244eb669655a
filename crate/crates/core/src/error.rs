use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Every variant maps onto one machine-readable category (see [`Error::category`]),
/// which the CLI uses to pick its exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (out-of-range angle,
    /// mismatched dimensions, non-bijective mapping, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable category string: `domain`, `config`, `data` or `io`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io { .. } | Error::Image { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
