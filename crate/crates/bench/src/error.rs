use std::path::PathBuf;

use waferbench_core::Error as CoreError;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{0}")]
    Diverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(CoreError),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Dataset(_) => 3,
            BenchError::Diverged(_) => 4,
            BenchError::Io { .. } | BenchError::Core(_) => 1,
        }
    }

    /// Reclassifies any failure raised while loading data as a dataset error.
    pub fn in_dataset(self) -> Self {
        match self {
            BenchError::Config(_) | BenchError::Dataset(_) => self,
            other => BenchError::Dataset(other.to_string()),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for BenchError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => BenchError::Config(m),
            CoreError::Dataset(m) => BenchError::Dataset(m),
            e @ CoreError::Diverged { .. } => BenchError::Diverged(e.to_string()),
            other => BenchError::Core(other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(BenchError::from(CoreError::Config("x".into())).exit_code(), 2);
        assert_eq!(BenchError::from(CoreError::Dataset("x".into())).exit_code(), 3);
        assert_eq!(BenchError::from(CoreError::Diverged { epoch: 3 }).exit_code(), 4);
        assert_eq!(BenchError::from(CoreError::Checkpoint("x".into())).exit_code(), 1);
        let io = BenchError::io("a", std::io::Error::other("gone"));
        assert_eq!(io.in_dataset().exit_code(), 3);
    }
}
