use std::path::PathBuf;

/// Error type shared by every pipeline stage.
///
/// Variants are grouped by contract class so the CLI can map them onto its
/// stable exit codes (config/usage errors vs. input data errors).
#[derive(Debug, thiserror::Error)]
pub enum LensError {
    /// A file or directory does not hold what the format requires
    /// (bad magic, missing sidecar, unparseable frame file, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Frame geometry is inconsistent within a clip or between operands.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// An input held zero frames.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A parameter value violates an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A value is outside the range the target representation can hold.
    #[error("range error: {0}")]
    Range(String),

    /// Two operands do not satisfy a joint precondition
    /// (space mismatch, length mismatch, wrong signedness, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// A pipeline configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl LensError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LensError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the configuration or call contract rather
    /// than by the input data itself. The CLI maps these to exit code 2 and
    /// everything else to exit code 3.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            LensError::Parameter(_) | LensError::Contract(_) | LensError::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LensError>;
