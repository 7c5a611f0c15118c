use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("signal error: {0}")]
    Signal(String),

    /// A corpus file violates the on-disk contract. `constraint` names the
    /// violated rule ("channel count", "sample rate", "metadata", ...).
    #[error("format error in {}: {constraint}: {detail}", path.display())]
    Format {
        path: PathBuf,
        constraint: &'static str,
        detail: String,
    },

    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        constraint: &'static str,
        detail: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            constraint,
            detail: detail.into(),
        }
    }
}
