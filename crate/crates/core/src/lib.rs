//! Graph pre-training and prompt tuning for few-shot node and graph
//! classification.
//!
//! A GIN encoder is pre-trained on a subgraph-similarity objective, frozen,
//! and then adapted to downstream k-shot tasks by learning a small prompt
//! vector that re-weights the readout.

pub mod encoder;
pub mod error;
pub mod experiment;
pub mod graphdata;
pub mod pretrain;
pub mod prompt;
pub mod rng;
pub mod tensorgrad;

pub use error::{Error, Result};
