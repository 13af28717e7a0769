use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Task(#[from] taskgen::TaskError),
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
    #[error("empty evaluation set")]
    EmptyEvaluation,
    #[error("non-finite loss at step {step} in `{feature}`: {detail}")]
    NonFinite { step: usize, feature: String, detail: String },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("seed audit: {0}")]
    Seeds(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
