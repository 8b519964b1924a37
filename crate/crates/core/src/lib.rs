//! Next-focus prediction for multi-location software-model completion.
//!
//! Given a recently changed (anchor) node of a versioned model graph, rank the
//! remaining nodes by how likely one of their direct successors changes next.
//! The crate covers graph diffing, pair labeling and splitting, label
//! embeddings, an attention-based ranker trained with a focal-style loss,
//! three baseline rankers, evaluation with Precision@k and rank statistics, a
//! synthetic corpus generator, and the pipeline driving the command line.

pub mod baselines;
pub mod datagen;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod ranker;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::{ModelGraph, NodeId, Project, StructuralDiff};
pub use scalar::Scalar;

/// Ranker parameters in double precision.
pub type RankerParams = ranker::RankerParams<f64>;
/// Ranker parameters in single precision.
pub type RankerParamsF32 = ranker::RankerParams<f32>;
pub type Checkpoint = ranker::Checkpoint<f64>;
pub type CheckpointF32 = ranker::Checkpoint<f32>;
pub type EmbeddingVector = embedding::EmbeddingVector<f64>;
pub type EmbeddingVectorF32 = embedding::EmbeddingVector<f32>;
