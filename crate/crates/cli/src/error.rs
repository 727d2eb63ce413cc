use std::path::Path;

use snls_core::SnlsError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] SnlsError),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0} verification check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// Process exit status: 1 failed checks, 2 configuration or usage,
    /// 3 numerical failure, 4 file system.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Core(e) => match e {
                SnlsError::Numeric(_) => 3,
                _ => 2,
            },
            CliError::Io { .. } => 4,
        }
    }
}
