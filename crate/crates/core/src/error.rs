use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// The variants line up with the CLI exit codes: `Domain` and `Usage` map to
/// usage errors, `Io`/`Parse`/`Data`/`Resource`/`State` to data errors and
/// `Numerical` to a numerical abort.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error (1 usage, 2 data, 3 numerical).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Usage(_) => 1,
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

macro_rules! domain_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Domain(format!($($arg)*))
    };
}
pub(crate) use domain_err;
