//! Process exit codes.

use optdes::Error;

pub const VALIDATION: i32 = 2;
pub const NUMERICAL: i32 = 3;
pub const PRECONDITION: i32 = 4;
/// A reproduced table differs from its stored values.
pub const MISMATCH: i32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(e: std::io::Error, what: &str) -> Self {
        CliError::validation(format!("{what}: {e}"))
    }
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::Point { source, .. } => code_of(source),
        Error::LinkDomain { .. } | Error::MeanDomain { .. } | Error::Singular | Error::SingularDraw(_) => NUMERICAL,
        Error::Precondition(_) => PRECONDITION,
        Error::Dimension { .. } | Error::Inadmissible { .. } | Error::Unsupported(_) | Error::Invalid { .. } => {
            VALIDATION
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: code_of(&e),
            message: e.to_string(),
        }
    }
}
