//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The rate polynomials violate a construction constraint
    /// (birth polynomial must vanish at 1, death polynomial at 0).
    #[error("invalid rate polynomials: {0}")]
    InvalidPolynomial(String),

    /// A derived per-state rate is negative beyond the clamping tolerance.
    #[error("negative rate at state {state}: {value:e}")]
    NegativeRate { state: usize, value: f64 },

    /// A builder or solver argument is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The drift coefficients violate the sign condition required by the
    /// bounds solver (D_0 >= 0 and D_j <= 0 for j >= 2).
    #[error(
        "sign condition violated ({detail}); \
         flipping the state labels may restore it"
    )]
    SignCondition { detail: String },

    /// The requested operation only supports quadratic rate polynomials.
    #[error("operation supports degree-2 rate polynomials only, got degree {degree}")]
    UnsupportedDegree { degree: usize },

    /// The master equation is refused above the desk-scale guard.
    #[error(
        "state count N = {n} exceeds the master-equation guard ({guard}); \
         use the bounds solver or stochastic simulation instead"
    )]
    DeskScaleExceeded { n: usize, guard: usize },

    /// The ODE integrator could not complete; `t_last` is the last time
    /// with a valid state.
    #[error("integration failed at t = {t_last}: {reason}")]
    IntegrationFailure { t_last: f64, reason: String },

    /// Malformed input (time grids, probability vectors, JSON configs).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than a
    /// numerical failure. CLI front ends map these to usage exit codes.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, Error::IntegrationFailure { .. })
    }
}
