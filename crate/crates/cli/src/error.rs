use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, carrying the exit status it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config or an input file that does not meet the schema.
    Usage(String),
    Compute(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Compute(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        })
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Compute(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<ssc_core::Error> for CliError {
    fn from(err: ssc_core::Error) -> Self {
        use ssc_core::Error as E;
        match &err {
            E::Io(_) => CliError::Io(err.to_string()),
            E::Csv(e) if e.is_io_error() => CliError::Io(err.to_string()),
            E::Csv(_) | E::Config(_) | E::MissingColumn(_) | E::Row { .. } | E::TreatmentConflict { .. } => {
                CliError::Usage(err.to_string())
            }
            _ => CliError::Compute(err.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
