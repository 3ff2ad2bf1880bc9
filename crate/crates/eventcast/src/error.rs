//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by simulation, dataset construction, training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A state vector or spectral field stopped being finite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// An input had the wrong length or shape.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The adaptive integrator drove the step size below the representable floor.
    #[error("integration failed at t = {t}: step size underflow")]
    StepSizeUnderflow { t: f64 },

    /// Advective CFL estimate exceeded the stability guard.
    #[error("CFL violation: u_max*dt/dx = {cfl:.3} exceeds {limit}")]
    CflViolation { cfl: f64, limit: f64 },

    /// Spectral solver produced non-finite coefficients.
    #[error("flow solver diverged at t = {t}")]
    Divergence { t: f64 },

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Series too short for the requested transformation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Target series has zero variance, so normalized errors are undefined.
    #[error("degenerate target: standard deviation is zero")]
    DegenerateTarget,

    /// Evaluation window contains no true events.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Training diverged or produced a non-finite loss.
    #[error("training failure: {0}")]
    Training(String),

    /// Model input schema does not match the supplied data.
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    /// Corrupt or unsupported on-disk artifact.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
