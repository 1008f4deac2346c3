use std::path::{Path, PathBuf};

use topoguard::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    /// A prerequisite file from an earlier stage is absent.
    #[error("{0}")]
    Missing(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_owned(), source }
    }

    /// 2 for configuration problems, 3 when the data cannot support the
    /// stage, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(Error::Config(_)) => 2,
            CliError::Missing(_)
            | CliError::Insufficient(_)
            | CliError::Core(Error::Insufficient(_) | Error::Empty(_) | Error::EmptyGraph { .. }) => 3,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Missing("x".into()).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Insufficient("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Parameter("x".into())).exit_code(), 1);
    }
}
