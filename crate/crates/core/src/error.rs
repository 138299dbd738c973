use std::path::PathBuf;

/// Errors returned by the estimation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("DFT window has {actual} samples, expected {expected}")]
    WindowLength { expected: usize, actual: usize },

    #[error("training data is degenerate: {0}")]
    DegenerateTraining(String),

    #[error("timestamp {0} s is outside the ground-truth range")]
    OutsideTruth(f64),

    #[error("time step must be positive, got {0} s")]
    NonPositiveStep(f64),

    #[error("marker library is empty")]
    EmptyLibrary,

    #[error("unknown marker id {0:?}")]
    UnknownMarker(String),

    #[error("duplicate marker id {0:?}")]
    DuplicateMarker(String),

    #[error("pose estimation needs two different markers, both observations point to {0:?}")]
    SameMarker(String),

    #[error("markers {0:?} and {1:?} coincide, baseline undefined")]
    CoincidentMarkers(String, String),

    #[error("outputs refer to different instants ({0} s vs {1} s)")]
    InstantMismatch(f64, f64),

    #[error("estimate and truth do not overlap in time")]
    NoOverlap,

    #[error("malformed input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
