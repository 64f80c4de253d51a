use std::path::PathBuf;

/// Errors produced anywhere in the breath-detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported encoding: {0}")]
    Unsupported(String),
    #[error("unsupported model version `{found}` (expected `{expected}`)")]
    UnsupportedVersion { found: String, expected: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Path { path, source }
    }
}
