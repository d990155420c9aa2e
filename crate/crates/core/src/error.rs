use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("tagger unavailable: {0}")]
    TaggerUnavailable(String),
    #[error("tagger protocol error: {0}")]
    Tagger(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("missing auxiliary input: {0}")]
    MissingAuxiliary(String),
    #[error("vocabulary hash mismatch: checkpoint has {expected}, data gives {found}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("no data for axis {0}")]
    EmptyAxis(String),
    #[error("result store is empty: {0}")]
    EmptyStore(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
