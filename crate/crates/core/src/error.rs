use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A forward evaluation produced NaN or infinity.
    #[error("non-finite loss: first offending node #{node} ({op})")]
    NonFiniteLoss { node: usize, op: &'static str },

    #[error("parameter update produced non-finite values")]
    NonFiniteParams,

    #[error("degenerate direction: vector has zero norm")]
    DegenerateDirection,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("label {label} out of range for {categories} categories")]
    Label { label: usize, categories: usize },

    #[error("parameter layouts do not match")]
    LayoutMismatch,

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::NonFiniteLoss { .. } | Error::NonFiniteParams | Error::DegenerateDirection => 3,
            _ => 2,
        }
    }
}
