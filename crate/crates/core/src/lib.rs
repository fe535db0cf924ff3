//! Personal knowledge graph engine: graph store, conversational
//! construction, beam-search retrieval, structural analysis and an
//! evaluation harness.

pub mod analysis;
pub mod bench;
pub mod construction;
pub mod graph;
pub mod media;
pub mod model;
pub mod prompts;
pub mod retrieval;
pub mod text;
pub mod vaccount;
