use std::fmt::Display;
use std::path::Path;

use lsvl_core::map_store::MapError;
use lsvl_core::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("every one of the {0} runs in the sweep diverged without converging")]
    DivergenceOnly(usize),
}

impl CliError {
    /// Process exit status: 2 config, 3 I/O, 4 divergence-only sweep.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::DivergenceOnly(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, e: impl Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    /// Reading or decoding an artifact counts as I/O; a well-formed artifact
    /// that does not fit the request is a config error.
    pub(crate) fn map(path: &Path, e: MapError) -> Self {
        match e {
            MapError::Io(_)
            | MapError::Image(_)
            | MapError::Truncated { .. }
            | MapError::Json(_)
            | MapError::Checksum
            | MapError::NotUnit { .. }
            | MapError::BadMagic
            | MapError::BadHeader(_) => CliError::io(path, e),
            other => CliError::Config(format!("{}: {other}", path.display())),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Map(MapError::Io(e)) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
