use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("label {label} out of range [0, {classes}) at pixel (n={n}, y={y}, x={x})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        n: usize,
        y: usize,
        x: usize,
    },

    #[error("gradient graph already consumed by a previous backward pass")]
    GraphConsumed,

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("latitude {0} outside Web-Mercator bounds")]
    LatitudeOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration labels contain a single class; parameters are not identifiable")]
    SingleClass,

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed file {}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    /// Stable machine-readable category for command-line reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "missing-file",
            Error::Config(_) => "invalid-config",
            Error::Format { .. } | Error::Json(_) => "format",
            Error::Io { .. } => "io",
            Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => "numeric",
            Error::SingleClass => "data",
            _ => "runtime",
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    /// Wrap an I/O error with the path it occurred on, mapping `NotFound`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
