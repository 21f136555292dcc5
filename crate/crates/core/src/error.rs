use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("no valid points in {path} ({rejected} lines rejected)")]
    NoValidPoints { path: PathBuf, rejected: usize },

    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("k = {k} is out of range for a dataset of {len} points")]
    KOutOfRange { k: usize, len: usize },

    #[error("empty workload")]
    EmptyWorkload,

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("singular interpolation system: {0}")]
    Singular(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the memory budget or a numerically singular
    /// fit, as opposed to bad input.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Resource(_) | Error::Singular(_))
    }
}
