use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("geometry error in zone {zone_id}: {message}")]
    Geometry { zone_id: String, message: String },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("collinear design")]
    CollinearDesign,

    #[error("degenerate variance")]
    DegenerateVariance,

    #[error("degenerate correlation")]
    DegenerateCorrelation,

    #[error("nothing to normalize")]
    NothingToNormalize,

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
