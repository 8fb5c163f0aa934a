//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown preset `{0}` (expected `fig2` or `fig3`)")]
    UnknownPreset(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("nonlinear solver failed to converge at y_b = {y_b}: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        y_b: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("solver error at power {power_w:.3e} W: {source}")]
    AtPower {
        power_w: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("solver error at detuning {delta:.6} 2pi*MHz: {source}")]
    AtDetuning {
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("Hilbert space too large: dimension {dim} exceeds guard {guard}")]
    DimensionGuard { dim: usize, guard: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
