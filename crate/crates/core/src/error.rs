use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error at alpha = {alpha}: {reason}")]
    Domain { alpha: f64, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("integration error: {0}")]
    Integration(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 I/O, 2 parameter, 3 data, 4 estimation or
    /// inference.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Domain { .. } | Error::Json(_) => 2,
            Error::Data(_) => 3,
            Error::Undefined(_) | Error::Integration(_) | Error::Estimation(_) | Error::Inference(_) => 4,
            Error::Io { .. } => 1,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
