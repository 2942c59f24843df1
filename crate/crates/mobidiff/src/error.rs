use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Failures surfaced to the command line; `Display` is always one line.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse: {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("missing artifact: {what} at {path}")]
    Missing { what: &'static str, path: PathBuf },
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("core: {0}")]
    Core(#[from] mobidiff_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, msg: impl ToString) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, msg: msg.to_string() }
    }

    /// Stable identifier for the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Missing { .. } => "missing",
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Core(_) => "core",
        }
    }

    /// `error: <message>` with embedded newlines flattened.
    pub fn one_line(&self) -> String {
        format!("error: {}", self).replace(['\n', '\r'], " ")
    }
}
