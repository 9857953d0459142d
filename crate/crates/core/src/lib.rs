//! Extraction of character relation structures (CRS) from long-form
//! scripts.
//!
//! The pipeline runs in three phases:
//!
//! 1. [`ingest`] chunks scripts, asks a backend for subject-predicate-object
//!    triplets and folds them into a weighted [`model::CharacterGraph`].
//! 2. [`selection`] grows the set of relevant characters from user-given
//!    main/sub characters with iterated personalized PageRank.
//! 3. [`agents`] refine the selection through five sequential LLM agents
//!    (merge, relations, filter, roles, groups).
//!
//! [`eval`] scores a finished CRS against expert annotations and
//! [`render`] exports it to Graphviz DOT.
//!
//! Numeric code is generic over [`scalar::Scalar`]; the aliases below fix
//! the scalar to `f64`, which is what the pipeline itself uses.

pub mod agents;
pub mod backend;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod persist;
pub mod prompts;
pub mod render;
pub mod scalar;
pub mod selection;

pub use model::{CharacterGraph, Crs, GroundTruth, NodeId, SpoTriplet, Stage, Tier};
pub use scalar::Scalar;

pub type PprConfig = selection::PprConfig<f64>;
pub type SelectionResult = selection::SelectionResult<f64>;
pub type RoundScores = selection::RoundScores<f64>;
pub type Embedding = backend::EmbeddingVector<f64>;
pub type EvalReport = eval::EvalReport<f64>;
pub type MetricValue = eval::MetricValue<f64>;
