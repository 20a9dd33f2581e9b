use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] gradtd::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("refusing to overwrite existing outputs (pass --overwrite): {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    OutputExists(Vec<PathBuf>),

    #[error("malformed metrics file {path}: {reason}")]
    Metrics { path: PathBuf, reason: String },

    #[error("inconsistent step grids for metric {metric:?}: {offenders:?}")]
    StepGrid { metric: String, offenders: Vec<String> },

    #[error("no results: {0}")]
    Empty(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
