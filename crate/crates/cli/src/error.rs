use eliminators_core::Error as CoreError;
use serde::Serialize;

/// Failure of a command. Usage errors exit with 2, computation errors with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{message}")]
    Usage { code: &'static str, message: String },
    /// Environment failures such as an occupied port.
    #[error("{message}")]
    Runtime { code: &'static str, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    code: &'a str,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage {
            code: "usage",
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage { code, .. } | CliError::Runtime { code, .. } => code,
            CliError::Core(e) => e.code(),
        }
    }

    /// Bad flags, unreadable inputs and invalid configuration are the
    /// caller's fault; everything else failed while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Runtime { .. } => 1,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Io { .. } => 2,
                CoreError::InGrouping { source, .. } if matches!(**source, CoreError::Config(_)) => 2,
                _ => 1,
            },
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ErrorLine {
            code: self.code(),
            message: self.to_string(),
        })
        .expect("error line serializes")
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
