use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Config` and `Validation` are user errors (bad input files, bad job
/// definitions). `Invariant` means the simulator reached a state that should
/// be impossible and always indicates a bug.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{field} = {value} is not divisible by {divisor}")]
    Indivisible {
        field: &'static str,
        value: u64,
        divisor: u32,
    },

    #[error("invalid job {job_id}: {reason}")]
    Validation { job_id: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// True for errors caused by bad user input rather than internal bugs.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
