use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed network or clustering.
    #[error("structure error: {0}")]
    Structure(String),

    #[error("unit {unit} has no neighbours; the neighbour-fraction exposure is undefined")]
    IsolatedUnit { unit: usize },

    /// The legitimate arm set is too small (fewer than two arms) or an arm count is degenerate.
    #[error("condition violation: {0}")]
    ConditionViolation(String),

    #[error("candidate space of {candidates} exceeds the budget of {budget}")]
    BudgetExceeded { candidates: u128, budget: u128 },

    #[error("unknown exposure super arm: {0}")]
    UnknownArm(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("state error: {0}")]
    State(String),

    /// Invalid configuration. `key` names the offending field.
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Any module error raised while running a replication, tagged with where it happened.
    #[error("replication {rep} failed at round {round}: {source}")]
    Round {
        rep: u64,
        round: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user configuration rather than by a failed run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Structure(_)
                | Error::ConditionViolation(_)
                | Error::BudgetExceeded { .. }
                | Error::Parameter(_)
                | Error::IsolatedUnit { .. }
        )
    }
}
