use thiserror::Error;

/// Errors raised by the numerical pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    Parameter { key: String, reason: String },

    #[error("diffusion undefined at zero gradient for the curvature family")]
    ZeroGradient,

    #[error(
        "no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
        /// `(iteration, residual_sup)` samples recorded while iterating.
        history: Vec<(usize, f64)>,
    },

    #[error("solve failed for seed {seed} at delta {delta}: {source}")]
    Job {
        seed: u64,
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient {value} outside the tabulated range [{min}, {max}]")]
    Extrapolation { value: f64, min: f64, max: f64 },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl Error {
    pub fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True when the error (or the one it wraps) is a nonconvergence failure.
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            Error::NonConvergence { .. } => true,
            Error::Job { source, .. } => source.is_nonconvergence(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
