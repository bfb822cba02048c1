use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum FerError {
    #[error("landmark set must contain exactly 68 points, got {0}")]
    WrongLandmarkCount(usize),
    #[error("non-finite landmark coordinate at index {0}")]
    NonFiniteLandmark(usize),
    #[error("degenerate face: eye centers coincide")]
    DegenerateFace,
    #[error("landmark index {0} out of range 0..68")]
    IndexOutOfRange(usize),
    #[error("degenerate segment: landmarks {0} and {1} coincide")]
    DegenerateSegment(usize, usize),

    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("image is {width}x{height}, need at least 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("region of interest is empty after clamping to the image")]
    EmptyRegion,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training-mode batch needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("format version mismatch: expected `{expected}`, found `{found}`")]
    FormatVersionMismatch { expected: String, found: String },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("malformed feature file: {0}")]
    MalformedFeatures(String),

    #[error("invalid fold count {k} for {n} samples")]
    InvalidFoldCount { k: usize, n: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),

    #[error("malformed landmarks in {path}: {reason}")]
    MalformedLandmarks { path: PathBuf, reason: String },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),
    #[error("no samples could be processed ({failures} failures)")]
    NoSamples { failures: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FerError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FerError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = FerError> = std::result::Result<T, E>;
