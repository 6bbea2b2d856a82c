use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncation { expected: usize, found: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("class {0} is not present in the dataset")]
    EmptyClass(u8),

    #[error("cannot normalize an all-black image")]
    ZeroField,

    #[error("degenerate probe: ||lambda|| = {norm:e}")]
    DegenerateProbe { norm: f64 },

    #[error("invalid overlap f = {f} (must lie in [0, alpha = {alpha}])")]
    InvalidOverlap { f: f64, alpha: f64 },

    #[error("domain mismatch: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch}: {source}")]
    TrainingAborted {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical model rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::DegenerateProbe { .. } | Error::InvalidOverlap { .. } => true,
            Error::TrainingAborted { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
