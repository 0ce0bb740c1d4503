use thiserror::Error;

/// Errors surfaced by the laboratory's numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the support of the distribution: {0}")]
    OutsideSupport(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("quadrature did not produce a finite value: {0}")]
    Numeric(String),

    #[error("normalization constant diverges: {0}")]
    Divergence(String),

    #[error("direction has non-finite moments under the base distribution: {0}")]
    Direction(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("regularity assumption violated: {0}")]
    Assumption(String),

    #[error("sampling grid does not cover the effective support: {0}")]
    Coverage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
