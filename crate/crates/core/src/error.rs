use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("filter dimension unattainable: covariance rank < 2")]
    FilterRank,

    #[error("unknown customer id `{0}`")]
    UnknownCustomer(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("sample {index} produced an empty Mapper graph")]
    EmptyGraph { index: usize },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
