use std::path::PathBuf;

use fcp_core::FcpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed FCPD/FCPM file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    /// A library error, labeled with the pipeline stage that raised it.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: FcpError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}

/// Attaches a stage label to library errors.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for std::result::Result<T, FcpError> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|source| HarnessError::Stage {
            stage: stage.to_string(),
            source,
        })
    }
}
