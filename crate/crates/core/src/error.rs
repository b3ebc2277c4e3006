use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MctError>;

#[derive(Debug, Error)]
pub enum MctError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape error in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MctError {
    pub fn param(msg: impl Into<String>) -> Self {
        MctError::Parameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MctError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage, 2 data/format, 3 numeric/analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            MctError::Parameter(_) => 1,
            MctError::Shape { .. }
            | MctError::Format { .. }
            | MctError::UnsupportedVersion { .. }
            | MctError::Io { .. } => 2,
            MctError::Numeric(_) | MctError::Diverged { .. } | MctError::Analysis(_) => 3,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(MctError::Shape {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
