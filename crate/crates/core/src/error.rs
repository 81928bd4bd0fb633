use std::path::PathBuf;

use crate::hjb::SolveOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid needs n_x >= 2 and n_y >= 1, got n_x = {nx}, n_y = {ny}")]
    Sizing { nx: usize, ny: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected_nx}x{expected_ny}, got {nx}x{ny}")]
    DimensionMismatch {
        expected_nx: usize,
        expected_ny: usize,
        nx: usize,
        ny: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("gain is undefined at alpha + gamma = {0} (must be positive)")]
    NonPositiveGainArgument(f64),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("non-finite value encountered at iterate {iteration}")]
    NonFinite { iteration: usize },

    #[error(
        "no convergence after {} iterations (last increment {:e})",
        .0.iterations,
        .0.final_increment
    )]
    NotConverged(Box<SolveOutcome>),

    #[error("no convergence after {steps} steps (last residual {residual:e})")]
    MaxSteps { steps: usize, residual: f64 },

    #[error("utility does not declare the bounds required by this check")]
    MissingBounds,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
