use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum SniaError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch in {op}: {lhs} vs {rhs}")]
    Dimension {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("action {action} is masked and must not be submitted")]
    MaskedAction { action: usize },

    #[error("episode already finished after {t} steps")]
    EpisodeFinished { t: usize },

    #[error("all actions are masked; the action distribution is degenerate")]
    DegenerateDistribution,

    #[error("missing checkpoint: expected a file at {path}")]
    MissingCheckpoint { path: String },

    #[error("bad checkpoint {path}: {msg}")]
    BadCheckpoint { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SniaError>;

impl SniaError {
    pub fn dimension(op: &'static str, lhs: impl std::fmt::Display, rhs: impl std::fmt::Display) -> Self {
        SniaError::Dimension {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }
}
