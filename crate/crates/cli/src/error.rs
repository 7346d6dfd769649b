use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("certificate infeasible: {0}")]
    Infeasible(String),
    #[error("delay profile exceeds the admissible bound: {0}")]
    DelayExceedsBound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::DelayExceedsBound(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}
