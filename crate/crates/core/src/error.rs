use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside the admissible domain [0, 1 - 1e-9]")]
    Domain { t: f64 },

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameter `{param}`: {constraint}")]
    InvalidParam { param: String, constraint: String },

    #[error("non-finite value {value} while evaluating {what} at t = {t}")]
    NonFinite { what: String, t: f64, value: f64 },

    #[error("quadrature on [{a}, {b}] did not converge: {panels} panels, estimated error {error:e} vs target {target:e}")]
    NoConvergence {
        a: f64,
        b: f64,
        panels: usize,
        error: f64,
        target: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("discretization failure at node {node} (t = {t}): {reason}")]
    Discretization { node: usize, t: f64, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid_param(param: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::InvalidParam {
            param: param.into(),
            constraint: constraint.into(),
        }
    }

    /// Errors caused by caller input rather than by the numerics.
    pub fn is_caller_error(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::UnknownFamily(_)
                | Error::InvalidParam { .. }
                | Error::InvalidGrid(_)
                | Error::Precondition(_)
        )
    }
}
