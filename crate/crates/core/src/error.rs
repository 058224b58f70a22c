use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image dimensions: {0}")]
    Dimension(String),

    #[error("transform is singular (|det| = {det:e})")]
    SingularTransform { det: f64 },

    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),

    #[error("no features: {0}")]
    NoFeatures(String),

    #[error("need at least 4 correspondences, got {0}")]
    InsufficientCorrespondences(usize),

    #[error("every sampled configuration was degenerate")]
    DegenerateConfiguration,

    #[error("header {0:?} not found")]
    HeaderNotFound(String),

    #[error("segmentation failed: {0}")]
    SegmentationFailure(String),

    #[error("OCR backend unavailable after {attempts} attempts: {reason}")]
    BackendUnavailable { attempts: u32, reason: String },

    #[error("malformed backend response: {0}")]
    Protocol(String),

    #[error("backend does not support {0}")]
    Unsupported(&'static str),

    #[error("prediction text {0:?} contains non-digit characters")]
    InvalidCharacters(String),

    #[error("identifier {0:?} is empty after normalization")]
    InvalidIdentifier(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("{} parcel(s) have no tract mapping: {}", .0.len(), .0.join(", "))]
    Join(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
