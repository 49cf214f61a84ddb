use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The leave-one-out system for measurement `k` cannot be solved.
    #[error("subset {k} is degenerate: {reason}")]
    SubsetDegenerate { k: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mixture fit degenerated: {0}")]
    FitDegenerate(String),

    #[error("no core/tail partition: {0}")]
    PartitionFailure(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
