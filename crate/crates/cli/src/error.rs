use thiserror::Error;

/// Failures surfaced to the command line, each with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The Gaussian filter stopped on a negative mean; partial output exists.
    #[error("filter aborted at step {step}: negative mean")]
    AbortedNegativeMean { step: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::AbortedNegativeMean { .. } => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<ctbp::Error> for CliError {
    fn from(e: ctbp::Error) -> Self {
        if e.is_numerical() || matches!(e, ctbp::Error::DegenerateEnsemble(_)) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
