use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("covariance matrix is singular or not positive definite; add a ridge term epsilon to the diagonal")]
    SingularCovariance,

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("borderline case: the most probable class is not unique; inspect it with a rho sweep instead")]
    Borderline,

    #[error("degenerate confusion matrix: {0}")]
    DegenerateMatrix(String),

    #[error("class-set mismatch: {0}")]
    ClassMismatch(String),

    #[error("grouping {grouping}: {source}")]
    InGrouping {
        grouping: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code, used by the CLI and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Config(_) => "config",
            Error::Dimension { .. } => "dimension",
            Error::SingularCovariance => "singular_covariance",
            Error::Divergence { .. } => "divergence",
            Error::Version { .. } => "version_mismatch",
            Error::Corrupt(_) => "corrupt_file",
            Error::Borderline => "borderline_case",
            Error::DegenerateMatrix(_) => "degenerate_matrix",
            Error::ClassMismatch(_) => "class_mismatch",
            Error::InGrouping { source, .. } => source.code(),
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
