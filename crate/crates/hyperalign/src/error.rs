//! Crate-wide error type.
//!
//! Variants correspond to the failure categories surfaced by the public API:
//! ingestion/format/data errors from file loading, argument and shape errors
//! from numeric operations, and config/report errors from the experiment
//! front end.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A required input file is missing or unreadable.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A file exists but its contents do not match the declared layout.
    #[error("format error: {0}")]
    Format(String),

    /// Values violate a data invariant (NaN, out-of-range reflectance, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A caller-supplied argument is out of its documented range.
    #[error("argument error: {0}")]
    Argument(String),

    /// Tensor dimensions are inconsistent with what a layer expects.
    #[error("shape error at {layer}: {msg}")]
    Shape { layer: String, msg: String },

    /// A network config string failed to parse.
    #[error("parse error at token {index} ({token:?}): {msg}")]
    Parse {
        index: usize,
        token: String,
        msg: String,
    },

    /// A parsed network violates a structural rule (softmax placement, ...).
    #[error("structure error: {0}")]
    Structure(String),

    /// A train/test split could not be formed.
    #[error("split error: {0}")]
    Split(String),

    /// Block pairing could not be formed.
    #[error("pairing error: {0}")]
    Pairing(String),

    /// A class-conditional ratio has no same-class or different-class mass.
    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    /// An operation was invoked on an object in the wrong state.
    #[error("state error: {0}")]
    State(String),

    /// The requested transformation is not defined for this network shape.
    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    /// An experiment config failed validation; `field` names the culprit.
    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },

    /// Report rendering found missing or inconsistent run artifacts.
    #[error("report error: {0}")]
    Report(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            Error::Report(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
