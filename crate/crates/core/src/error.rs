use std::io;

/// Errors produced anywhere in the simulator, the learners and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid action {action}: cache holds {occupied} of {capacity} slots")]
    InvalidAction {
        action: usize,
        occupied: usize,
        capacity: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("backward pass requested without a matching forward tape")]
    MissingTape,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("policy failed at epoch {epoch}: {source}")]
    Policy {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
