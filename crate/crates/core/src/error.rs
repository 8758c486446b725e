use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text or binary input did not follow its format. `line` is 1-based
    /// for text formats and 0 when not applicable.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// A binary header field was missing, truncated or out of range.
    #[error("invalid header field `{field}`: {message}")]
    Header { field: &'static str, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid light direction: {0}")]
    InvalidDirection(String),

    #[error("index ({u}, {v}) out of bounds for {width}x{height}")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("shadow domain mismatch: {0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn header(field: &'static str, message: impl Into<String>) -> Self {
        Error::Header {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
