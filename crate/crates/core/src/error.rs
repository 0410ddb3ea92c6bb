use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure classes of the laboratory. Each maps onto one process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing upstream certificate: {0}")]
    Dependency(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code contract: 64 for configuration and usage problems, 70 for
    /// numerical and internal failures. Assertion failures (exit 2) are not
    /// errors; they are reported through the command summaries.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json { .. } | Error::Dependency(_) => 64,
            Error::Domain(_)
            | Error::Precondition(_)
            | Error::Resolution(_)
            | Error::Numerical(_)
            | Error::IllPosed(_)
            | Error::Data(_)
            | Error::Io { .. } => 70,
        }
    }
}
