use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    /// A probability vector or matrix is not a valid distribution.
    #[error("invalid distribution: {0}")]
    Distribution(String),

    /// Caller supplied arguments outside an operation's contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A predictor was asked about a context it does not cover.
    #[error("model coverage error: {0}")]
    ModelCoverage(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Alphabet or table size exceeds a configured guard.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Parse(String),
}

impl LabError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        LabError::Usage(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Parse(e.to_string())
    }
}
