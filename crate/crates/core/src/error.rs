use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter domain: {0}")]
    ParameterDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical blowup at step {step} (t = {t}): non-finite nodal value")]
    Blowup { step: u64, t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("step size underflow at t = {t} (h = {h:e}); stiffness or parameter fault")]
    StepUnderflow { t: f64, h: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
