use std::io;
use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps these onto process exit codes: anything wrong with input
/// data (missing/corrupt/unsupported files) is a data error, anything wrong
/// with a model file or a config/model mismatch is a model error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    /// Input audio is structurally broken or not a format we accept.
    #[error("bad input: {0}")]
    BadInput(String),

    /// Model file is corrupt, has a bad magic, or does not fit the job.
    #[error("bad model: {0}")]
    BadModel(String),

    /// Invalid configuration (sizes that do not line up, empty datasets...).
    #[error("bad config: {0}")]
    BadConfig(String),
}

impl Error {
    pub fn bad_input(msg: impl Into<String>) -> Self {
        Error::BadInput(msg.into())
    }

    pub fn bad_model(msg: impl Into<String>) -> Self {
        Error::BadModel(msg.into())
    }

    pub fn bad_config(msg: impl Into<String>) -> Self {
        Error::BadConfig(msg.into())
    }
}
