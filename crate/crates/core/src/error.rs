use std::path::PathBuf;

/// Errors produced by fitting, evaluation and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {stage}: {detail}")]
    NumericalFailure { stage: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    /// A lower-level failure annotated with where it happened (fold, grid cell, ...).
    #[error("{context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NumericalFailure {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Fit {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fit { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidArgument(_) => 2,
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::NumericalFailure { .. } => 5,
            Error::Fit { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_keeps_exit_code_and_root() {
        let e = Error::numerical("solve", "not SPD").context("fold 3").context("cell 7");
        assert_eq!(e.exit_code(), 5);
        assert!(matches!(e.root(), Error::NumericalFailure { .. }));
        let msg = e.to_string();
        assert!(msg.starts_with("cell 7: fold 3: "), "{msg}");
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
        assert_eq!(Error::invalid("x").exit_code(), 2);
    }
}
