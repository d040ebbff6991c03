use std::fmt;
use std::path::Path;

/// Failure with its process exit code: 1 for problems in the data, 2 for
/// usage, configuration and stage-order errors.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    /// An input that an earlier stage should have produced is absent.
    pub fn missing_artifact(path: &Path, stage: &str) -> Self {
        CliError::usage(format!("missing artifact {} (run `{stage}` first)", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<causenet::Error> for CliError {
    fn from(e: causenet::Error) -> Self {
        use causenet::Error::*;
        let code = match e {
            MissingColumn { .. } | ContractViolation(_) | InvalidConfig(_) | UnknownVariable(_) | NotAnnotated => 2,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
