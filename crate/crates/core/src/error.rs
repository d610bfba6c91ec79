use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth z = {0}")]
    NonPositiveDepth(f64),
    #[error("point set is empty")]
    EmptySet,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("mesh lies entirely behind the camera")]
    FullyBehindCamera,
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid body model: {0}")]
    InvalidBodyModel(String),
    #[error("part index {0} out of range 1..=14")]
    PartIndexOutOfRange(usize),

    #[error("human mesh has {mesh} vertices but the body model has {model}")]
    CorrespondenceMismatch { mesh: usize, model: usize },
    #[error("malformed field grid: {0}")]
    MalformedGrid(String),

    #[error("mean vertex depth {0} is not positive")]
    NonPositiveMeanDepth(f64),

    #[error("no probe point within the {shell} m object shell")]
    EmptyShell { shell: f64 },
    #[error("matrix is too close to singular for a unique nearest rotation")]
    SingularMatrix,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),

    #[error("scene {dir}: missing {what}")]
    SceneMissing { dir: PathBuf, what: &'static str },
    #[error("scene {dir}: {reason}")]
    InvalidScene { dir: PathBuf, reason: String },
    #[error("vertex counts differ ({0} vs {1}); v2v requires identical topology")]
    TopologyMismatch(usize, usize),

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
