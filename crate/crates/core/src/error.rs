use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("node {0} is not a compute node")]
    NotComputeNode(usize),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("burst buffer model: {0}")]
    Model(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("job {job} can never fit on the platform")]
    Infeasible { job: usize },

    #[error("profile consistency violated: {0}")]
    Consistency(String),

    #[error("simulation did not finish: {0} jobs still pending")]
    Liveness(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
