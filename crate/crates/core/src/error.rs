use thiserror::Error;

use crate::model::State;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented domain constraint.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("step size underflow at t={t:e} (h={step:e}) in state ({}, {}, {})", state.fbar, state.f, state.g)]
    Stiffness { t: f64, step: f64, state: State },

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("boundedness certificate unavailable: {0}")]
    CertificateUnavailable(String),

    #[error("theorem inapplicable: {0}")]
    TheoremInapplicable(String),

    #[error("predicate unavailable: {0}")]
    PredicateUnavailable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("imputation error in column `{column}`: {message}")]
    Imputation { column: String, message: String },

    #[error("column `{column}` is missing a value in year {year}; impute first")]
    RequiresImputation { column: String, year: i32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by the numerics rather than by the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Stiffness { .. } | Error::Divergence(_))
    }
}
