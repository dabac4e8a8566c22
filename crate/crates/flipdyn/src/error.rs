use thiserror::Error;

/// Errors raised by the solvers, the oracle and the calibration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlipDynError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("second-order condition violated: {0}")]
    SecondOrderConditionViolated(String),

    #[error("feasibility violated at k = {k}: adversary control cost is below its minimal value")]
    FeasibilityViolated { k: usize },

    #[error("no uniform-in-x regime at k = {k}: value gap minus a takeover cost is indefinite")]
    RegimeIndeterminate { k: usize },

    #[error("tree depth {depth} exceeds the cap of {cap}")]
    TreeDepthExceeded { depth: usize, cap: usize },

    #[error("no bracket for {0}")]
    NoBracket(String),
}

pub type Result<T> = std::result::Result<T, FlipDynError>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(FlipDynError::InvalidInput(format!("{name} is not finite ({value})")))
    }
}
