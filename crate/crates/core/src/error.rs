use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("row {row} is not stochastic (sums to {sum})")]
    Stochasticity { row: usize, sum: f64 },

    #[error("utterance too short: {phones} phonetic vectors for a {dim}-dimensional stacked space")]
    ShortUtterance { phones: usize, dim: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
