use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header in {field}: {detail}")]
    MalformedHeader { field: String, detail: String },

    #[error("dimension mismatch in {field}: expected {expected}, got {actual}")]
    DimensionMismatch {
        field: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {field} at element {index}")]
    NonFiniteData { field: String, index: usize },

    #[error("invalid value for {field}: {detail}")]
    InvalidValue { field: String, detail: String },

    #[error("truncated data in {field} at byte offset {offset}")]
    Truncated { field: String, offset: usize },

    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("point depth {depth} too close to the camera plane (point {index})")]
    NearZeroDepth { index: usize, depth: f64 },

    #[error("mask has no valid pixels")]
    EmptyMask,

    #[error("too few accepted correspondences: {found} < {required}")]
    NoCorrespondences { found: usize, required: usize },

    #[error("index {index} out of range for {field} (len {len})")]
    IndexOutOfRange {
        field: String,
        index: usize,
        len: usize,
    },

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("no ground-truth points left after masking")]
    EmptyAfterMasking,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn dim(field: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            field: field.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
