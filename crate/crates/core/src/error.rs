use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid weight {0}: weights must be finite and non-negative")]
    InvalidWeight(f64),

    #[error("stale or unknown particle handle")]
    StaleHandle,

    #[error("no mass to sample from")]
    NoMass,

    #[error("no particle of mass {0}")]
    NoSuchMass(u64),

    #[error("{key}: {message}")]
    Config { key: String, message: String },

    #[error("step-size refinement did not converge (last change {last_change:e} at h = {step:e})")]
    StepSize { step: f64, last_change: f64 },

    #[error("time {0} is not on the output grid")]
    TimeNotInGrid(f64),

    #[error("time grids do not match")]
    GridMismatch,

    #[error("at least {needed} runs required, got {got}")]
    InsufficientRuns { needed: usize, got: usize },

    #[error("gain factor inputs must be positive")]
    NonPositive,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
