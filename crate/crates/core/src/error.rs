use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file at byte offset {offset}: {reason}")]
    Corruption { offset: u64, reason: String },

    #[error("schema error: missing column `{column}`{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Schema { column: String, line: Option<u64> },

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("class-degenerate input: {0}")]
    ClassDegenerate(String),

    #[error("document {doc_id}: need at least 2 analyst estimates, got {count}")]
    InsufficientEstimates { doc_id: String, count: usize },

    #[error("document {doc_id}: analyst estimates have zero dispersion")]
    DegenerateDispersion { doc_id: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Attaches the file being read. I/O errors already carry their path and
    /// pass through unchanged.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::File { .. }) => e,
            other => Error::File {
                path: path.into(),
                source: Box::new(other),
            },
        }
    }

    /// The innermost error under any stage or file context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by bad arguments or configuration rather than
    /// by the data being processed.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } | Error::File { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
