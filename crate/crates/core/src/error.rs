use thiserror::Error;

/// Errors produced by the estimation engine and its file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular homography ({context}): |det| = {det:e}")]
    SingularHomography { context: String, det: f64 },

    #[error("point ({x}, {y}) maps to infinity under the homography")]
    PointAtInfinity { x: f64, y: f64 },

    #[error("pixel ({x}, {y}) lies behind the camera for the given plane")]
    BehindCamera { x: f64, y: f64 },

    #[error("invalid plane: {0}")]
    InvalidPlane(String),

    #[error("invalid rigid motion: {0}")]
    InvalidMotion(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("solver diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(what: impl Into<String>) -> Self {
        Error::DimensionMismatch(what.into())
    }
}
