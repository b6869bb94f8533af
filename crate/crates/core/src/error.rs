use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    Length {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("infeasible trajectory: {0}")]
    Infeasible(String),

    #[error("thermal fit failed: {0}")]
    Fit(String),

    #[error("matrix not positive definite after jitter escalation ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("ground-truth generation exhausted its budget of {0} draws")]
    GenerationBudget(usize),

    #[error("agent {agent}: {reason}")]
    Agent { agent: usize, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed history: {0}")]
    History(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
