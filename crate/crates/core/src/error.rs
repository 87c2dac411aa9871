use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}line {line}: {msg}", .file.as_ref().map(|f| format!("{}: ", f.display())).unwrap_or_default())]
    Parse {
        file: Option<PathBuf>,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("missing data: {0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: None,
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn with_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, msg, .. } => Error::Parse {
                file: Some(path.into()),
                line,
                msg,
            },
            other => other,
        }
    }

    /// Short machine-parseable category used by the CLI and the C API.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non-finite",
            Error::Diverged(_) => "diverged",
            Error::ModelMismatch(_) => "model-mismatch",
            Error::Missing(_) => "missing",
        }
    }
}
