use std::path::PathBuf;

/// Failures of the runner, each mapped to its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}:{line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },

    #[error("invalid manifest: {0}")]
    Validation(String),

    #[error("unknown optimizer '{0}'")]
    UnknownOptimizer(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Manifest { .. } | CliError::Validation(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Read { .. } | CliError::Write { .. } => 5,
            CliError::UnknownOptimizer(_) => 6,
        }
    }
}

impl From<bamsprod_core::Error> for CliError {
    fn from(e: bamsprod_core::Error) -> Self {
        use bamsprod_core::Error as E;
        match e {
            E::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
