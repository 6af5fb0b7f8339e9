use thiserror::Error;

pub type Result<T> = std::result::Result<T, DccError>;

#[derive(Debug, Error)]
pub enum DccError {
    #[error("invalid distribution parameter: {0}")]
    Parameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("model error at site `{site}`: {message}")]
    Model { site: String, message: String },

    #[error("empirical measure has no particles")]
    EmptyMeasure,

    #[error("no record carries positive mass")]
    NoMass,

    #[error("not enough weights collected ({have} < {need})")]
    NotReady { have: u64, need: u64 },

    #[error("no straight-line programs discovered: {0}")]
    NoSlps(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
