use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file. `line` is 1-based and counts the header.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("invalid subset code {code:?}: {msg}")]
    SubsetCode { code: String, msg: String },

    #[error("variable {name:?} has zero standard deviation over the training years")]
    ZeroVariance { name: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("horizon {horizon} already observed")]
    AlreadyObserved { horizon: usize },

    /// Weights or densities collapsed in a way the caller has to resolve.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::SubsetCode { .. } => "subset_code",
            Error::ZeroVariance { .. } => "zero_variance",
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::AlreadyObserved { .. } => "already_observed",
            Error::Degenerate(_) => "degenerate",
            Error::Serde(_) => "serde",
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::ZeroVariance { .. })
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
