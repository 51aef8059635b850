use thiserror::Error;

/// Failures shared by every engine.
///
/// The variants map one-to-one onto the CLI exit codes: validation and
/// domain problems exit with 2, capacity with 3, bracket/precondition with 4.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("capacity: {what} requires {required}, cap is {cap}")]
    Capacity { what: &'static str, required: u128, cap: u128 },

    #[error("bracket: {0}")]
    Bracket(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Domain(_) => "domain",
            Error::Capacity { .. } => "capacity",
            Error::Bracket(_) => "bracket",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
