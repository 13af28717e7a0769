use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task `{name}`; valid tasks: {valid}")]
    UnknownTask { name: String, valid: String },
    #[error("{task} needs at least {min} nodes, got {n}")]
    TooFewNodes { task: &'static str, n: usize, min: usize },
    #[error("cannot batch trajectories of different tasks ({0} and {1})")]
    MixedTasks(&'static str, &'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid inputs for {task}: {msg}")]
    InvalidInputs { task: &'static str, msg: String },
    #[error("malformed trajectory: {0}")]
    Malformed(String),
    #[error("trajectory invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TaskError>;
