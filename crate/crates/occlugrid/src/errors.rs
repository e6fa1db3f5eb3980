//! Failure reporting for the command-line tools.
//!
//! Every error carries a stable code; `main` prints `CODE: message` as a
//! single line on stderr and exits nonzero, so scripts can dispatch on
//! the prefix without parsing prose.

use std::fmt;
use std::path::PathBuf;

use occlugrid_core::tape::NnError;
use occlugrid_core::scene::SceneError;

#[derive(Debug)]
pub enum CliError {
    /// Command-line arguments that clap accepts but the program cannot use.
    Usage(String),
    /// Unreadable, unparsable, or internally inconsistent run configuration.
    Config(String),
    /// Filesystem failure; keeps the path that was being touched.
    Io { path: PathBuf, source: std::io::Error },
    /// Bad or empty input data (datasets, track files, maps).
    Data(String),
    /// Model construction or forward-pass failure.
    Model(String),
    /// Structurally invalid checkpoint file.
    Checkpoint(String),
    /// Resuming training under a configuration that differs from the
    /// one the checkpoint was written with.
    Resume(String),
    /// Requested input subset contradicts what a checkpoint was trained on.
    Ablate(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Config(_) => "E_CONFIG",
            CliError::Io { .. } => "E_IO",
            CliError::Data(_) => "E_DATA",
            CliError::Model(_) => "E_MODEL",
            CliError::Checkpoint(_) => "E_CHECKPOINT",
            CliError::Resume(_) => "E_RESUME",
            CliError::Ablate(_) => "E_ABLATE",
        }
    }

    /// Wraps an io error with the path it happened on.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Config(m)
            | CliError::Data(m)
            | CliError::Model(m)
            | CliError::Checkpoint(m)
            | CliError::Resume(m)
            | CliError::Ablate(m) => write!(f, "{}: {m}", self.code()),
            CliError::Io { path, source } => {
                write!(f, "{}: {}: {source}", self.code(), path.display())
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Model(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Data(e.to_string())
    }
}
