use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Ingestion {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Integrity {
        file: String,
        line: usize,
        message: String,
    },

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("class {class} has {available} instances, need at least {required}")]
    Sampling {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("shape error in {op}: {message}")]
    Shape { op: &'static str, message: String },

    #[error("non-finite value produced by {op}")]
    Numeric { op: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("batch error: {0}")]
    Batch(String),

    #[error("task error: {0}")]
    Task(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, message: impl Into<String>) -> Self {
        Error::Shape {
            op,
            message: message.into(),
        }
    }

    /// True for failures caused by NaN/Inf during a numerical pass.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. })
    }

    /// Process exit code: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numeric() {
            2
        } else {
            1
        }
    }
}
