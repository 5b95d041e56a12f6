use std::path::PathBuf;

/// Errors surfaced by the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Format {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("method not applicable: {0}")]
    MethodInapplicable(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
