use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{context}: matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { context: String, pivot: usize },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// A Riccati trajectory lost positivity or boundedness for the given
    /// attenuation level.
    #[error("{stage} design infeasible at node {node}, t = {t}, gamma = {gamma}: {reason}")]
    Infeasible {
        stage: &'static str,
        node: usize,
        t: f64,
        gamma: f64,
        reason: String,
    },

    #[error("simulation diverged at t = {t} (node {node:?})")]
    Divergence { t: f64, node: Option<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },

    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }
}
