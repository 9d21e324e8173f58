//! Incremental 3D semantic scene graphs built from segmented point-cloud
//! frames, with classification biased by accumulated context (a persistent
//! global graph) and by an external common-sense knowledge graph.

pub mod construct;
mod eigen;
pub mod embedding;
pub mod error;
pub mod frame;
pub mod fusion;
pub mod geometry;
pub mod gnn;
pub mod graph;
pub mod knowledge;
pub mod pipeline;
pub mod segment;
pub mod serialize;
pub mod synth;

pub use error::{Error, Result};
