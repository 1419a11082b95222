//! Building blocks for turning relation tuples into a relation-classification
//! dataset: tuple sampling, candidate generation over pluggable model backends,
//! quality scoring, per-tuple ranking, fusion, and LLM classification evaluation.

pub mod backend;
pub mod blending;
pub mod buckets;
pub mod generation;
pub mod ranking;
pub mod rc_eval;
pub mod registry;
pub mod scoring;
pub mod splits;
pub mod store;
pub mod templates;
pub mod types;
pub mod util;
