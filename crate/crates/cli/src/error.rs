use thiserror::Error;

/// Failures reported by the command-line tool, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input: exit code 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl From<kernelscore::Error> for CliError {
    fn from(e: kernelscore::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a path to I/O and parse errors.
pub fn with_path<T, E: std::fmt::Display>(r: Result<T, E>, path: &std::path::Path) -> CliResult<T> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
