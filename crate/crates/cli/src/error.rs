use thiserror::Error;

/// Failure of a CLI run, mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] reglab::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// Some jobs of a batch failed; their outputs were skipped.
    #[error("{failed} of {total} jobs failed; first failure: {worst}")]
    Partial { failed: usize, total: usize, worst: Box<reglab::Error> },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 2 config/input error, 3 numerical failure, 4 infeasible or degenerate problem, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => core_code(e),
            CliError::Partial { worst, .. } => core_code(worst),
            CliError::Io { .. } => 1,
        }
    }
}

fn core_code(e: &reglab::Error) -> u8 {
    use reglab::Error::*;
    match e {
        InvalidInput(_) | Parse { .. } => 2,
        NumericalError { .. } | QuadratureUnstable { .. } => 3,
        DegenerateInterval { .. } | DegenerateOptimum { .. } | InfeasibleAlpha { .. } | NoFeasibleRoot(_) => 4,
        Io(_) => 1,
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
