use hjhomog_core::Error as CoreError;
use thiserror::Error;

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// A check failed.
pub const EXIT_CHECK: i32 = 1;
/// Bad command line or configuration.
pub const EXIT_USAGE: i32 = 2;
/// A solve did not converge.
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}`: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: CoreError,
    },

    #[error("check failed: {0}")]
    Check(String),

    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Pipeline { source, .. } if source.is_nonconvergence() => EXIT_NONCONVERGENCE,
            // bad parameter values come from the configuration
            CliError::Pipeline {
                source: CoreError::Parameter { .. },
                ..
            } => EXIT_USAGE,
            CliError::Pipeline { .. } | CliError::Check(_) | CliError::Io { .. } => EXIT_CHECK,
        }
    }
}

/// Attach a stage name to core errors.
pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> Stage<T> for Result<T, CoreError> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Pipeline { stage, source })
    }
}
