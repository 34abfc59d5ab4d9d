//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("rejection budget exhausted after {attempts} attempts (acceptance rate {rate:.3e}){}", leader.map(|l| format!(" for leader {l}")).unwrap_or_default())]
    RejectionBudget { attempts: u64, rate: f64, leader: Option<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("out of grid: {0}")]
    OutOfGrid(String),

    #[error("sampler failure at seed {seed}: {source}")]
    Sampler {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
