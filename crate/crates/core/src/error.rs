use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no free space in occupancy grid")]
    NoFreeSpace,
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("environment too cluttered: no collision-free configuration after {0} tries")]
    TooCluttered(usize),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("statistics error: {0}")]
    Stats(String),
    #[error("corpus contains no movements")]
    EmptyCorpus,
    #[error("evaluator failed: {0}")]
    Evaluator(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
