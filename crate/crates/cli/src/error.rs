use std::path::PathBuf;

use hula_core::HulaError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("chain diverged at iteration {iteration}; partial draws written to {}", .draws.display())]
    Diverged { iteration: usize, draws: PathBuf },
    #[error(transparent)]
    Core(#[from] HulaError),
}

impl CliError {
    /// 1 for divergence and numerical failures, 2 for usage, config and
    /// input problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged { .. } => 1,
            CliError::Core(HulaError::Divergence { .. } | HulaError::Numerical(_)) => 1,
            CliError::Write { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Data {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
