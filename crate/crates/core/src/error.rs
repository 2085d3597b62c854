use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value lies outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A record in an input file could not be parsed or failed validation.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A CHSH correlator cell required for S has no trials.
    #[error("missing correlator cell for {state} with settings ({a},{b})")]
    MissingCell { state: &'static str, a: u8, b: u8 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for file-system failures, false for validation and domain failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
