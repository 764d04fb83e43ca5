//! Greedy and beam-search decoding with length normalization over any
//! autoregressive scorer.

pub mod hypothesis;
pub mod search;

pub use hypothesis::{length_penalty, BeamConfig, Hypothesis};
pub use search::{beam_search, greedy_decode, StepScorer};
