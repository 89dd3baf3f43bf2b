use thiserror::Error;

use crate::sim::Transcript;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input parameters.
    #[error("invalid input: {0}")]
    Input(String),

    /// An exact computation would exceed its configured budget.
    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    Budget {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    /// A protocol did not finish within its declared number of rounds.
    #[error("protocol exceeded its round budget of {budget}")]
    RoundBudget {
        budget: usize,
        partial: Box<Transcript>,
    },

    /// A streaming algorithm needs more passes than allowed.
    #[error("pass budget of {budget} exceeded")]
    PassBudget { budget: usize, used: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("construction failed after {attempts} attempts: {detail}")]
    Construction { attempts: usize, detail: String },

    #[error("property violation: {0}")]
    PropertyViolation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
