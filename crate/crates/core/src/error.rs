use std::path::PathBuf;

/// Errors produced by the library and mapped onto CLI exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input file. `offset` is the byte position where parsing failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A precondition of an operation was not met (shape mismatch, bad parameter, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Refinement produced a NaN or infinite loss or gradient.
    #[error("non-finite loss or gradient at step {step}")]
    NonFinite { step: usize },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
