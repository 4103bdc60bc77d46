use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid shape {shape}: {reason}")]
    InvalidShape { shape: Shape, reason: String },

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error("{op} requires power-of-two dimensions, got {rows}x{cols}; resize the input first")]
    NotPowerOfTwo {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("bad {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("checkpoint does not match architecture: {0}")]
    CheckpointMismatch(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("failed to decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &Shape, right: &Shape) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.clone(),
            right: right.clone(),
        }
    }
}
