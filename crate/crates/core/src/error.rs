use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("range must be positive, got {0} m")]
    NonPositiveRange(f64),

    #[error(
        "{paths} paths are not identifiable from an {n_rf}x{n_rf} compressed covariance \
         (need N_RF > d; operational limit is d <= floor((N_RF - 1) / 2))"
    )]
    Identifiability { paths: usize, n_rf: usize },

    #[error("model covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("combiner Gram matrix WᴴW is singular")]
    SingularCombiner,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reference channel has zero energy")]
    ZeroChannel,

    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
