use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse grouping of failures, mirrored by the CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug)]
pub enum Error {
    /// Two tensors (or a tensor and a declared layout) disagree.
    Shape {
        op: &'static str,
        detail: String,
    },
    InvalidArgument(String),
    /// A NaN or infinity appeared in the output of `op`.
    NonFinite {
        op: &'static str,
    },
    /// The optimization diverged or a gradient check exceeded its tolerance.
    Numerical(String),
    UnknownLayer(String),
    /// A value violates a domain invariant (weights vs. spec, manifest records, ...).
    Validation(String),
    Config {
        key: Option<String>,
        detail: String,
    },
    /// A file does not follow its declared binary or text layout.
    Format {
        what: &'static str,
        detail: String,
    },
    UnsupportedFormat(String),
    Truncated {
        what: &'static str,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(key: Option<&str>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.map(str::to_owned),
            detail: detail.into(),
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::NonFinite { .. } | Error::Numerical(_) => ErrorCategory::Numerical,
            Error::Format { .. }
            | Error::UnsupportedFormat(_)
            | Error::Truncated { .. }
            | Error::Io { .. } => ErrorCategory::Io,
            Error::Shape { .. }
            | Error::InvalidArgument(_)
            | Error::UnknownLayer(_)
            | Error::Validation(_)
            | Error::Config { .. } => ErrorCategory::Validation,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::UnknownLayer(name) => write!(f, "unknown layer `{name}`"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Config { key: Some(k), detail } => write!(f, "config error at `{k}`: {detail}"),
            Error::Config { key: None, detail } => write!(f, "config error: {detail}"),
            Error::Format { what, detail } => write!(f, "malformed {what}: {detail}"),
            Error::UnsupportedFormat(msg) => write!(f, "unsupported format: {msg}"),
            Error::Truncated { what } => write!(f, "truncated {what}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
