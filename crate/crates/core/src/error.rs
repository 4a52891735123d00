use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("calibration not found: {0}")]
    CalibrationNotFound(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("resolution mismatch for camera {camera}: frame {frame} is {found:?}, frame 0 is {expected:?}")]
    ResolutionMismatch {
        camera: usize,
        frame: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid camera: {0}")]
    Camera(String),

    #[error("point lies behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pixel ({x}, {y}) lies outside the source triangle")]
    OutsideTriangle { x: f64, y: f64 },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("need more than {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("label {label} is not admissible at node {node}")]
    InadmissibleLabel { node: usize, label: usize },

    #[error("ground-truth mask is empty, hit ratio is undefined")]
    EmptyGroundTruth,

    #[error("every depth map is empty")]
    EmptyDepthMaps,

    #[error("coarse initialisation failed for cluster {cluster} in view {view}: {reason}")]
    CoarseInit { cluster: u32, view: usize, reason: String },

    #[error("object {0} lies outside every camera frustum")]
    ObjectOutsideFrusta(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
