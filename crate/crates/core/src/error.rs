use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has nonzero mode {mode} above the Galerkin cutoff {cutoff}")]
    ModeAboveCutoff { mode: usize, cutoff: usize },

    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("Picard iteration did not contract within {iterations} iterations (distances: {distances:?})")]
    NoContraction {
        iterations: usize,
        distances: Vec<f64>,
    },

    #[error("base trajectory too coarse: step {found} exceeds {allowed}")]
    BaseTooCoarse { found: f64, allowed: f64 },

    #[error("quadrature resolution insufficient: {points} grid points for a degree {degree} integrand")]
    InsufficientResolution { points: usize, degree: usize },

    #[error("interpolation constraint violated: sigma = {sigma} must be below {bound} (slack {slack})")]
    InterpolationConstraint { sigma: f64, bound: f64, slack: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
