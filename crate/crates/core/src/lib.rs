//! Semantic topic extraction.
//!
//! Sentences are embedded by an external model, reduced with UMAP,
//! clustered with HDBSCAN, and each cluster's vocabulary is ranked by mean
//! cosine similarity between word and sentence embeddings. Topics can then be
//! merged by similarity and scored with the usual coherence metrics.

pub mod cluster;
pub mod coherence;
pub mod corpus;
pub mod embed;
pub mod pipeline;
pub mod points;
pub mod reduce;
pub mod synthetic;
pub mod topic;
