use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("invalid material data: {0}")]
    Data(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("{method} requires an isotropic material law ({detail})")]
    UnsupportedMethod { method: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
