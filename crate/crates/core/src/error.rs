use thiserror::Error;

/// Errors raised by the operators in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KirError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value {value} while evaluating {context}")]
    NonFinite { context: String, value: f64 },

    #[error("index {index:?} (or one of its neighbours) lies outside the window of radius {window}")]
    Boundary { index: Vec<i64>, window: i64 },

    #[error("s = {s} is outside the {expected} regime")]
    WrongRegime { s: f64, expected: &'static str },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

impl KirError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        KirError::InvalidInput(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        KirError::Contract(msg.into())
    }

    /// Numerical-contract failures as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KirError::NonFinite { .. } | KirError::Convergence(_) | KirError::Contract(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, KirError>;

pub(crate) fn finite(value: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(KirError::NonFinite {
            context: context(),
            value,
        })
    }
}
