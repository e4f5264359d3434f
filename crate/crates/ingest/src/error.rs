use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("request to {url} failed: {detail}")]
    Transport { url: String, detail: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("offline and no cached response for {url}")]
    OfflineMiss { url: String },
    #[error("cannot parse {context}: {detail}")]
    Parse { context: String, detail: String },
    #[error("citation batch {index} ({ids}) failed: {detail}")]
    Batch { index: usize, ids: String, detail: String },
    #[error("embedding model {model_tag} returned dimension {found}, expected {expected}")]
    DimensionDrift {
        model_tag: String,
        expected: usize,
        found: usize,
    },
    #[error("embedding provider returned {found} vectors for {expected} texts")]
    EmbeddingCount { expected: usize, found: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("joining metadata and embeddings produced no articles")]
    EmptyJoin,
    #[error(transparent)]
    Core(#[from] citescope_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            detail: detail.to_string(),
        }
    }

    /// Worth retrying: connection problems, throttling and server errors.
    pub fn is_transient(&self) -> bool {
        match self {
            Error::Transport { .. } => true,
            Error::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
