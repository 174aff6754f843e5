use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or model shapes disagree.
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("argument error: {0}")]
    Argument(String),
    /// A value left the finite domain (zero-norm weights, NaN loss, ...).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A pose sequence violates a data contract.
    #[error("data error in video `{video_id}`: {message}")]
    Data { video_id: String, message: String },
    /// Malformed input files (manifests, checkpoints).
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(video_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Data {
            video_id: video_id.into(),
            message: message.into(),
        }
    }

    /// Attach context (fold, epoch, ...) to the message while keeping the error kind.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Dimension(m) => Error::Dimension(format!("{ctx}: {m}")),
            Error::Argument(m) => Error::Argument(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Data { video_id, message } => Error::Data {
                video_id,
                message: format!("{ctx}: {message}"),
            },
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
