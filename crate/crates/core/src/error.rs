use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Network wiring problem: a mode is read before it is populated or written twice.
    #[error("configuration error: {0}")]
    Config(String),

    /// A parameter is outside its allowed domain.
    #[error("invalid parameter: {0}")]
    Validation(String),

    /// An attack's parameters do not meet its own success condition.
    #[error("infeasible attack: {0}")]
    Infeasible(String),

    /// Evaluation point outside a response curve's tabulated range.
    #[error("{value} outside covered range [{min}, {max}] of {what}")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Validation(_) => "validation",
            Error::Infeasible(_) => "infeasible",
            Error::Range { .. } => "range",
            Error::Load { .. } => "load",
            Error::Degenerate(_) => "degenerate",
            Error::Contract(_) => "contract",
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
