use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_SEARCH: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{operation} failed: {source}")]
    Numeric {
        operation: &'static str,
        #[source]
        source: dirlab_core::Error,
    },

    #[error("line hypothesis failed: worst systole {systole} is below {eps}")]
    HypothesisFailed { eps: f64, systole: f64 },

    #[error("{failed} selftest suite(s) failed")]
    SelftestFailed { failed: usize },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::SelftestFailed { .. } => EXIT_SELFTEST,
            CliError::Numeric {
                source: dirlab_core::Error::SearchExhausted,
                ..
            } => EXIT_SEARCH,
            CliError::Numeric { .. } | CliError::HypothesisFailed { .. } | CliError::Io { .. } => EXIT_NUMERIC,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Attaches the failing operation's name to a core error.
pub(crate) trait Context<T> {
    fn during(self, operation: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for dirlab_core::Result<T> {
    fn during(self, operation: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numeric { operation, source })
    }
}
