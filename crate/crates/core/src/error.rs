use thiserror::Error;

/// Errors produced by the geometry, warping and augmentation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// The input sits on a point where the requested quantity is not unique
    /// (antipode of the optical axis, ambiguous indexed-sphere representative, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("point lies behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("pitch-yaw radius {0} leaves the open upper hemisphere (must be < pi/2)")]
    OutOfHemisphere(f64),

    /// The indexed-sphere map is not injective on circles of radius k*pi.
    #[error("pitch-yaw radius {0} is a positive multiple of pi")]
    NonInjective(f64),

    #[error("homography maps the point to infinity")]
    PointAtInfinity,

    #[error("no rigidity witness exists: the motion is a pure rotation")]
    NoWitness,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("kernel spacing {kernel} is not an integer multiple of grid spacing {grid}")]
    SpacingMismatch { kernel: f64, grid: f64 },

    #[error("no jointly valid pixels to compare")]
    EmptyRegion,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
