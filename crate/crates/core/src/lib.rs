//! Node-wise contrastive learning on attributed graphs.
//!
//! Each node is embedded by a two-layer GCN over random-walk subgraph views.
//! Contrast sets are built per anchor from its K-hop neighborhood, grown with
//! embedding-space mixup, cleaned of probable same-class "negatives" by a pair
//! of logistic density-ratio heads, and subsampled for diversity with a
//! k-DPP. Embeddings are scored with a linear probe.

pub mod checkpoint;
pub mod dpp;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod objective;
pub mod pipeline;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
