use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column} (at `{path}`): {message}")]
    Parse { line: usize, column: usize, path: String, message: String },
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl CliError {
    pub fn invalid(path: impl Into<String>, message: impl ToString) -> Self {
        Self::Validation { path: path.into(), message: message.to_string() }
    }

    /// Key path of the offending entry, when known.
    pub fn path(&self) -> &str {
        match self {
            Self::Io { path, .. } | Self::Parse { path, .. } | Self::Validation { path, .. } => path,
        }
    }
}
