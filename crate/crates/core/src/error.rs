use thiserror::Error;

/// Errors produced by the simulator and the estimation stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("scatterer placement failed after {0} retries")]
    PlacementRetries(usize),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("rank-deficient gain regressor (condition number {0:.3e})")]
    RankDeficient(f64),

    #[error("no records: {0}")]
    NoRecords(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
