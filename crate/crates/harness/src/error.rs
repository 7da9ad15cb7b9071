use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: poison_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for spec problems, 3 for missing or unreadable data, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Spec(_) => 2,
            HarnessError::Data(_) => 3,
            _ => 1,
        }
    }

    pub fn core(context: impl Into<String>) -> impl FnOnce(poison_core::Error) -> Self {
        let context = context.into();
        move |source| HarnessError::Core { context, source }
    }

    pub fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Output { path, source }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Output {
            path: PathBuf::from("<csv>"),
            source: std::io::Error::other(e.to_string()),
        }
    }
}
