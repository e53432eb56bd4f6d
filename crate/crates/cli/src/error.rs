use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    /// A numerical failure in a command whose result is not itself an experiment outcome.
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

impl From<ratact_core::Error> for CliError {
    fn from(e: ratact_core::Error) -> Self {
        match e {
            ratact_core::Error::Explosion { .. } => CliError::Numeric(e.to_string()),
            ratact_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}
