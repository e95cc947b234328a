use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid id {id}: {context}")]
    InvalidId { id: usize, context: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} has {n} variables, above the enumeration cap of {cap}")]
    TooLarge { what: &'static str, n: usize, cap: usize },
    #[error("no embedding found: {0}")]
    EmbeddingFailure(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("divergence undefined: {0}")]
    DivergenceUndefined(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("format error in {field}: {detail}")]
    Format { field: String, detail: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    TrainingFailure(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { field: field.into(), detail: detail.into() }
    }
}
