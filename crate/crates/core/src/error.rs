use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid config at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("episode already finished; call reset first")]
    EpisodeFinished,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state space of {states} exceeds the budget of {budget}")]
    StateBudget { states: u64, budget: u64 },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Whether this error comes from configuration rather than a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
