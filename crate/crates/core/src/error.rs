use thiserror::Error;

#[derive(Debug, Error)]
pub enum GmIpcError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("scenario generation failed: {0}")]
    ScenarioGeneration(String),
    #[error("trial {index}: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<GmIpcError>,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, GmIpcError>;

impl From<serde_json::Error> for GmIpcError {
    fn from(e: serde_json::Error) -> Self {
        GmIpcError::Serde(e.to_string())
    }
}

impl From<csv::Error> for GmIpcError {
    fn from(e: csv::Error) -> Self {
        GmIpcError::Serde(e.to_string())
    }
}
