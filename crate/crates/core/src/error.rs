use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("basis set is empty")]
    EmptyBasis,
    #[error("near-singular expansion: schur complement {schur:e} below {threshold:e}")]
    NearSingularExpansion { schur: f64, threshold: f64 },
    #[error("degenerate removal of column {index}: H(i,i) = {pivot:e}")]
    DegenerateRemoval { index: usize, pivot: f64 },
    #[error("rank-one update is singular: 1 + v'Hu = {denominator:e}")]
    RankOneSingular { denominator: f64 },
    #[error("basis cache is stale: built against metric version {basis}, metric is at {metric}")]
    StaleBasis { basis: u64, metric: u64 },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("no particles to estimate from")]
    NoParticles,
    #[error("success rate of an empty list")]
    EmptyList,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
