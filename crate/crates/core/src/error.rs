use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("edge ({u}, {v}) has index out of range for graph with {n} nodes")]
    IndexOutOfRange { u: usize, v: usize, n: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("homophily undefined: every evaluable node is isolated")]
    HomophilyUndefined,

    #[error("stationary density undefined: graph has no edges")]
    StationaryDensityUndefined,

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("oracle restricted to small graphs (n = {n} exceeds cap {cap})")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("singular Vandermonde: nodes {0} and {1} coincide")]
    SingularVandermonde(f64, f64),

    #[error("invalid filter spec: {0}")]
    InvalidFilter(String),

    #[error("stale cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("class {class} too small to stratify ({count} nodes)")]
    ClassTooSmall { class: usize, count: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("inconsistent dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
