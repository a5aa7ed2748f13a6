use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported image format: {0}")]
    Unsupported(String),

    #[error("decode error in {path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("training aborted at step {step}: {loss} is not finite")]
    NonFiniteLoss { step: u64, loss: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
