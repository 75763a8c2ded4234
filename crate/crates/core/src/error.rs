use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("missing array `{0}`")]
    MissingArray(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("insufficient batch: need at least {needed} rows, got {got}")]
    InsufficientBatch { needed: usize, got: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    /// Training diverged. `checkpoint` is the last good state written before the failure.
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged {
        epoch: usize,
        msg: String,
        checkpoint: Option<PathBuf>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::MissingArray(_) => "MissingArray",
            Error::Io { .. } => "IoError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Shape(_) => "ShapeError",
            Error::Numeric(_) => "NumericError",
            Error::InsufficientBatch { .. } => "InsufficientBatch",
            Error::Format(_) => "FormatError",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::Config { .. } => "ConfigError",
            Error::DegenerateClustering(_) => "DegenerateClustering",
            Error::Diverged { .. } => "NumericError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
