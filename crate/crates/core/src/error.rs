use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("states are {delta_ms} ms apart, more than the alignment tolerance")]
    Stale { delta_ms: i64 },
    #[error("invalid vehicle state: {0}")]
    InvalidState(String),
    #[error("lane axis has zero length")]
    DegenerateAxis,
    #[error("polyline needs at least two distinct vertices")]
    DegeneratePolyline,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("bad column mapping: {0}")]
    Mapping(String),
    #[error("need at least {needed} instances to split, got {got}")]
    TooFewInstances { needed: usize, got: usize },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

impl DatasetError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.as_ref().display().to_string(), source }
    }
}
