//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("coupling matrix is singular: |det| = {det:e} does not exceed tolerance {tol:e}")]
    SingularCoupling { det: f64, tol: f64 },

    #[error("graph Lyapunov matrices are not positive definite: {0}")]
    NonPositiveQ(String),

    #[error("disturbance exceeded its declared bound at t = {t}: |w| = {norm} > {bound}")]
    BoundViolation { t: f64, norm: f64, bound: f64 },

    #[error("agent {0} has neither in-edges nor a leader link in the active topology")]
    IsolatedAgent(usize),

    #[error("separation {distance:e} is below the numerical floor")]
    ZeroSeparation { distance: f64 },

    #[error("inner obstacle radius breached: distance {distance} <= {inner_radius}")]
    InnerRadiusBreach { distance: f64, inner_radius: f64 },

    #[error("pole {0} is not a positive real number")]
    NonPositivePole(f64),

    #[error("decay rate {0} is outside (0, 1); dwell-time bound is inapplicable")]
    InvalidDecayRate(f64),

    #[error("gain rule inapplicable: denominator 2*varpi - R*psi = {0} <= 0")]
    RuleInapplicable(f64),

    #[error("state is outside the admissible region: {0}")]
    AdmissibilityViolation(String),

    #[error("non-finite value at t = {t}: {what}")]
    NonFiniteState { t: f64, what: String },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed ({invariant}): {detail}")]
    Validation { invariant: String, detail: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn validation(invariant: &str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant: invariant.to_string(),
            detail: detail.into(),
        }
    }

    /// Short machine-greppable category used as a diagnostic prefix.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } | Error::ConfigInvalid(_) | Error::Expression(_) => "config",
            Error::Io(_) => "io",
            Error::NonFiniteState { .. } => "divergence",
            Error::InnerRadiusBreach { .. } | Error::ZeroSeparation { .. } => "safety",
            _ => "numeric",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
