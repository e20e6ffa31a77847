use thiserror::Error;

#[derive(Debug, Error)]
pub enum InfoOtError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A domain whose points are all identical has no usable length scale.
    #[error("degenerate domain: {0}")]
    Degenerate(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "out-of-sample queries need source coordinates; this source domain was built from \
         precomputed distances, supply distances from the query to every training point instead"
    )]
    OutOfSampleUnsupported,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, InfoOtError>;
