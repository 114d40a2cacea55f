//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A system specification violates a structural hypothesis.
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// Shapes of matrices, vectors or fields do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// The Lyapunov construction could not find an admissible schedule.
    #[error("no Lyapunov certificate: {0}")]
    Certificate(String),

    /// An iterative linear-algebra routine failed or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The time step exceeds the stability bound of the explicit stages.
    #[error("CFL violation at t = {time}: dt*|xi|max*|A| = {value:.3e} exceeds {limit}")]
    Cfl { time: f64, value: f64, limit: f64 },

    /// The smallness monitor of the nonlinear solver tripped.
    #[error("smallness monitor tripped at t = {time}: norm {norm:.3e} > threshold {threshold:.3e}")]
    Smallness { time: f64, norm: f64, threshold: f64 },

    /// Not enough samples for a fit or a quadrature.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter { name, reason: reason.into() }
}
