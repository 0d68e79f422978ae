//! Embedding of heterogeneous information networks that treats affiliation
//! and interaction relations with different score functions.
//!
//! The pipeline is: load a typed graph ([`graph`]), measure and categorize
//! its relations ([`measures`]), extract weighted node-relation triples
//! ([`triples`]), train node and relation embeddings ([`train`]) and
//! evaluate them on downstream tasks ([`eval`]).

pub mod error;
pub mod eval;
pub mod graph;
pub mod measures;
pub mod model;
pub mod synth;
pub mod train;
pub mod triples;

pub use error::{Error, Result};
pub use graph::{Endpoint, HeteroGraph, NodeId, RelationSpec, Schema};
pub use measures::{CategorizationPolicy, Category, RelationStats};
pub use model::{EmbeddingStore, LossConfig, LossFamily, Norm};
pub use train::{TrainConfig, TrainReport, Variant};
pub use triples::{RelationId, Triple, TripleStore};

/// Seeded generator used everywhere randomness is needed.
pub type SeededRng = rand_chacha::ChaCha8Rng;
