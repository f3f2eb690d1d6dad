use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("index {index} out of range [0, {bound}) in {context}")]
    Index {
        context: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric divergence: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("encode error: {0}")]
    Encode(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("protocol error (party {party:?}, step {step}): {reason}")]
    Protocol {
        party: Option<usize>,
        step: &'static str,
        reason: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("file error at {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn protocol(party: Option<usize>, step: &'static str, reason: impl Into<String>) -> Self {
        Error::Protocol {
            party,
            step,
            reason: reason.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parseable category, used by the CLI's one-line error report.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Index { .. } => "index",
            Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::Parse { .. } => "parse",
            Error::Decode { .. } => "decode",
            Error::Encode(_) => "encode",
            Error::Channel(_) => "channel",
            Error::Protocol { .. } => "protocol",
            Error::Data(_) => "data",
            Error::File { .. } => "file",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
