use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupted data: {0}")]
    Corruption(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("physics error: {0}")]
    Physics(String),

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("length mismatch in {path}: declared {declared} bytes, found {found}")]
    LengthMismatch {
        path: PathBuf,
        declared: u64,
        found: u64,
    },

    #[error("content hash mismatch in {path}")]
    HashMismatch { path: PathBuf },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("malformed header in {path}: {detail}")]
    Header { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite(_) => "non-finite",
            Error::Contract(_) => "contract",
            Error::Config(_) => "config",
            Error::Corruption(_) => "corruption",
            Error::Solver(_) => "solver",
            Error::Physics(_) => "physics",
            Error::Truncated { .. } => "truncated",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::HashMismatch { .. } => "hash-mismatch",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::Header { .. } => "header",
            Error::Io { .. } => "io",
        }
    }
}
