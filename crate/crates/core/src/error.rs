use thiserror::Error;

/// Errors raised by the accountants and oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountingError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The inversion target is not enclosed by the curve values at the bracket ends.
    #[error(
        "target delta {target:e} not enclosed by bracket [{lo}, {hi}] (curve values {f_lo:e}, {f_hi:e})"
    )]
    BracketFailure {
        target: f64,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("composed loss grid would need {needed} points (cap {cap}); use a larger discretization interval")]
    GridOverflow { needed: usize, cap: usize },

    #[error("group privacy conversion only applies to {0}")]
    UnsupportedConversion(&'static str),

    #[error("dataset has {n} records but the sampler requires n = b * T = {required}")]
    ShapeViolation { n: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, AccountingError>;

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(AccountingError::InvalidParameter {
            name,
            value,
            reason: "must be finite and positive",
        })
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(AccountingError::InvalidParameter {
            name,
            value,
            reason: "must lie in (0, 1]",
        })
    }
}
