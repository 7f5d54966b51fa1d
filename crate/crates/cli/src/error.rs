use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use vdeffuant::ModelError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn model(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }

    /// 2 for bad input, 3 for filesystem trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}
