//! Layered narrative knowledge graphs built from hierarchical comic
//! annotations.
//!
//! The pipeline: [`annotation`] documents are built into a
//! [`graph::NarrativeGraph`] by [`builder`], action and event labels are
//! clustered and relabeled by [`normalize`], the graph is queried by
//! [`reason`], and query quality is scored by [`eval`]. [`fixture`]
//! generates deterministic stories for tests and demos.

pub mod annotation;
pub mod builder;
pub mod eval;
pub mod exec;
pub mod fixture;
pub mod graph;
pub mod normalize;
pub mod reason;

pub use annotation::{parse_annotations, serialize_annotations, validate_annotations, AnnotationDoc, AnnotationError};
pub use builder::build_all;
pub use exec::Execution;
pub use graph::{deserialize, serialize, NarrativeGraph};
