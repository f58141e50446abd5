use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("wheel index {0} out of range (expected 0..4)")]
    WheelIndex(usize),

    #[error("wheel {wheel}: roller axis parallel to wheel axis (cos(alpha) = {cos_alpha:e})")]
    SingularWheel { wheel: usize, cos_alpha: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported parameter schema version {0} (expected 1)")]
    Schema(u32),

    #[error("parameter file: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("reduced mass matrix is near singular (condition number {0:e})")]
    NearSingularDynamics(f64),

    #[error("integration diverged at t = {time} s")]
    Diverged { time: f64 },

    #[error("wheel combination needs at least {min} wheels, got {got}")]
    ComboSize { min: usize, got: usize },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("trajectory: {0}")]
    Trajectory(String),

    #[error("time scaling did not converge after {0} iterations")]
    ScalingNotConverged(usize),

    #[error("empty trace")]
    EmptyTrace,
}

pub type Result<T> = std::result::Result<T, ModelError>;
