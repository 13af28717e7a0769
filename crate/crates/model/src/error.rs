use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] diffcore::DiffError),
    #[error(transparent)]
    Task(#[from] taskgen::TaskError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("config file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Failure while decoding or scoring one feature (or inside the processor).
    #[error("in `{feature}` at step {step}: {source}")]
    AtFeature {
        feature: String,
        step: usize,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    pub(crate) fn at(feature: &str, step: usize) -> impl FnOnce(ModelError) -> ModelError + '_ {
        move |e| ModelError::AtFeature {
            feature: feature.to_string(),
            step,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Lets model code run inside closures that expect substrate errors.
impl From<ModelError> for diffcore::DiffError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Diff(d) => d,
            other => diffcore::DiffError::InvalidArgument {
                op: "model",
                msg: other.to_string(),
            },
        }
    }
}
