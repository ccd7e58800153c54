use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("incomplete permutation")]
    IncompletePermutation,

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid candidate list: {0}")]
    InvalidCandidates(String),

    #[error("no relevant passage for query {query_id}")]
    NoRelevantPassage { query_id: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unclamped propensity at input position {input_position}, output rank {output_rank}")]
    UnclampedPropensity {
        input_position: usize,
        output_rank: usize,
    },

    #[error("loss variant {0} requires a propensity matrix")]
    MissingPropensity(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
