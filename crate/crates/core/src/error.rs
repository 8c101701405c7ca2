//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    DimensionMismatch {
        left: String,
        right: String,
        context: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mask set contains masks of mixed dimensions: {0}")]
    MixedDimensions(String),

    #[error("no valid pixels available for {0}")]
    NoValidPixels(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("PLY parse error: {0}")]
    PlyParse(String),

    #[error("PLY is missing required vertex property `{0}`")]
    MissingProperty(String),

    #[error("ASCII PLY is not supported; re-export as binary_little_endian")]
    AsciiPly,

    #[error("cloud has no semantic features; refinement requires feature_* properties or a sidecar")]
    MissingFeatures,

    #[error("refinement graph is empty: {0}")]
    GraphEmpty(String),

    #[error("label vector off the simplex beyond tolerance at node {node}: {detail}")]
    SimplexViolation { node: usize, detail: String },

    #[error("numerical failure in solver at iteration {iteration}: {detail}")]
    NumericalFailure { iteration: usize, detail: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("fixture spec error: {0}")]
    FixtureSpec(String),

    #[error("{path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(
        left: impl std::fmt::Display,
        right: impl std::fmt::Display,
        context: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            left: left.to_string(),
            right: right.to_string(),
            context: context.into(),
        }
    }

    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
