use std::fmt;

/// Errors surfaced by the runner and file formats.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(chve_core::error::Error),
    Io(std::io::Error),
    Format(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config: {msg}"),
            CliError::Core(err) => write!(f, "solver: {err}"),
            CliError::Io(err) => write!(f, "io: {err}"),
            CliError::Format(msg) => write!(f, "format: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<chve_core::error::Error> for CliError {
    fn from(err: chve_core::error::Error) -> CliError {
        CliError::Core(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> CliError {
        CliError::Io(err)
    }
}
