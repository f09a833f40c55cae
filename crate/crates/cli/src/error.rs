use evoeq::Error;
use thiserror::Error as ThisError;

/// Failure of a command; the variant fixes the process exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("solve failure: {0}")]
    Solve(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Certificate(_) => 2,
            CliError::Solve(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Certificate(_) => "certificate",
            CliError::Solve(_) => "solve",
            CliError::Verification(_) => "verification",
        }
    }
}

/// Maps a library error to the exit-code class it belongs to.
pub fn classify(e: Error) -> CliError {
    match e {
        Error::Hypothesis { .. } | Error::Certificate { .. } | Error::SubspaceCertificate { .. } | Error::NullSpace { .. } => {
            CliError::Certificate(e.to_string())
        }
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::Parse(_) | Error::Csv(_) => CliError::Config(e.to_string()),
        Error::Io(_) => CliError::Config(e.to_string()),
        Error::Precondition(_)
        | Error::Step { .. }
        | Error::Singular { .. }
        | Error::SizeGuard { .. }
        | Error::Divergence { .. }
        | Error::Timeout { .. } => CliError::Solve(e.to_string()),
    }
}
