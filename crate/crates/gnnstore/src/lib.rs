//! Sharded graph storage, sampling and operator engine for GNN training.
//!
//! The crate is layered the way the runtime consumes it: `store` and
//! `partition` build per-shard graphs, `importance` decides which remote
//! neighborhoods to replicate, `sampling` serves traverse / neighborhood /
//! negative requests through per-shard buckets, `operators` provides the
//! aggregate / combine forward-backward pair with embedding memoization, and
//! `runtime` glues them into the training loop.

pub mod attr;
pub mod bench;
pub mod gen;
pub mod importance;
pub mod io;
pub mod lru;
pub mod operators;
pub mod partition;
pub mod powerlaw;
pub mod runtime;
pub mod sampling;
pub mod store;
pub mod types;

pub use types::{EdgeType, GraphError, Result, VertexId, VertexType};
