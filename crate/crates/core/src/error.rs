use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate projection for joint {joint}: |w| = {w:.3e} below 1e-9")]
    DegenerateProjection { joint: usize, w: f64 },

    #[error("insufficient views: need >= 2 observations with positive weight, got {got}")]
    InsufficientViews { got: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("camera {view_id}: {reason}")]
    InvalidCamera { view_id: String, reason: String },

    #[error("all joints invalid: empty pose")]
    EmptyPose,

    #[error("no jointly valid joints: pose distance undefined")]
    UndefinedDistance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bone {bone} ({name}) never measurable in any input pose")]
    IncompleteProfile { bone: usize, name: String },

    #[error("bone {bone} ({name}) has zero length in source pose; direction undefined")]
    DegenerateBone { bone: usize, name: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("camera id {0} not present in calibration")]
    MissingCamera(String),

    #[error("frame index {t} out of range (0..{len})")]
    FrameOutOfRange { t: usize, len: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint config hash {found} does not match run config hash {expected}")]
    CheckpointMismatch { expected: String, found: String },

    #[error("training aborted at step {step}: non-finite {term} = {value}")]
    NonFiniteLoss {
        step: usize,
        term: String,
        value: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn image(path: impl AsRef<std::path::Path>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
