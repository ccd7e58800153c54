//! Positional-bias mitigation for listwise reranking.
//!
//! The crate pairs an inverse-propensity-scored ranking loss and
//! position-aware data augmentation with the harness needed to measure
//! positional bias: propensity estimation from randomized inputs, controlled
//! position sweeps, NDCG@10, rank fusion and Kemeny aggregation. A linear
//! scorer with an explicit per-position logit stands in for the LLM whose
//! first-token identifier logits drive the ranking.
//!
//! Input positions and ranks are 1-based at every public boundary.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod permute;
pub mod propensity;
pub mod rerank;
pub mod rng;
pub mod scorer;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use loss::{LossConfig, LossValue, LossVariant};
pub use permute::AugmentedSet;
pub use propensity::{PropensityMatrix, TransitionCounts};
pub use rerank::{FusionInput, WindowConfig};
pub use rng::RngStream;
pub use scorer::{ScorerParams, SynthConfig, SynthDataset};
pub use train::{TrainConfig, TrainReport};
pub use types::{CandidateList, PassageRef, Ranking, RelevanceJudgments, RunRecord};
