use std::fmt;

use mtp_core::MtpError;

/// Failure categories, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Every problem found in the configuration.
    Config(Vec<String>),
    Data(String),
    Estimation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(problems) => {
                writeln!(f, "configuration error ({} problem(s)):", problems.len())?;
                for p in problems {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation error: {m}"),
        }
    }
}

impl From<MtpError> for CliError {
    fn from(e: MtpError) -> Self {
        if e.is_config_error() {
            CliError::Config(vec![e.to_string()])
        } else if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Estimation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
