use std::path::PathBuf;

use thiserror::Error;

use crate::config::Pos;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{pos}: {msg}", path.display())]
    Parse { path: PathBuf, pos: Pos, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] modica_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
