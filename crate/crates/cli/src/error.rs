use std::fmt;
use std::path::PathBuf;

/// Failure of a command, with the process exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingInput(PathBuf),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error:\n{m}"),
            CliError::MissingInput(p) => write!(f, "missing input file: {}", p.display()),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<scdn_core::Error> for CliError {
    fn from(e: scdn_core::Error) -> Self {
        match e {
            scdn_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
