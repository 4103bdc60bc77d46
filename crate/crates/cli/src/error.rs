use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} does not exist: {path}")]
    MissingPath { what: &'static str, path: PathBuf },

    #[error(transparent)]
    Core(#[from] ffcnet::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 for usage and configuration problems, 2 for everything that went
    /// wrong after the run started.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::MissingPath { .. } => 1,
            CliError::Core(ffcnet::Error::Config(_) | ffcnet::Error::CheckpointMismatch(_)) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(ffcnet::Error::Config("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(ffcnet::Error::CheckpointMismatch("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(ffcnet::Error::Numeric("nan".into())).exit_code(), 2);
        let missing = CliError::MissingPath {
            what: "dataset root",
            path: "nowhere".into(),
        };
        assert_eq!(missing.exit_code(), 1);
        assert!(missing.to_string().contains("nowhere"));
    }
}
