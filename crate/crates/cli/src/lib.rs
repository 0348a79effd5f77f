//! Std companion to the core library: file formats, manifests, and the
//! command implementations behind the `ntm` binary.

pub mod checkpoint;
pub mod commands;
pub mod cooc_cache;
pub mod files;
pub mod manifest;

pub use ntm_core;

/// Command failure, carrying its scripting exit code.
/// 2 usage/config, 3 numerical abort, 4 I/O (including malformed files).
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical abort: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
