use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write results: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Output(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<convsparse::Error> for CliError {
    fn from(e: convsparse::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(std::io::Error::other(e))
    }
}
