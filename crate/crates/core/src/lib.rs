//! Weakly supervised temporal action segmentation from unordered action sets.
//!
//! Training data is a set of videos, each annotated only with the set of
//! actions that occur somewhere in it. From that supervision the crate builds
//! three models and combines them at inference time:
//!
//! - [`grammar`]: a label automaton restricting admissible action orderings,
//! - [`lengths`]: per-class segment length distributions with estimated means,
//! - [`framenet`]: a multi-task framewise classifier turned into per-frame
//!   class-conditional scores.
//!
//! [`decoder`] runs an exact Viterbi search over segmentations constrained by
//! the automaton and the length model. [`metrics`] scores the output against
//! framewise ground truth, and [`cli`] ties everything into a pipeline.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod framenet;
pub mod grammar;
pub mod lengths;
pub mod metrics;
pub mod pipeline;

pub use corpus::{ClassTable, Corpus, FeatureMatrix, Segmentation, Split, VideoRecord};
pub use decoder::{decode, decode_given_set, DecodeConfig, DecodeResult, FrameScores};
pub use error::{Error, Result};
pub use grammar::GrammarAutomaton;
pub use lengths::{LengthKind, LengthModel, MeanLengths};
