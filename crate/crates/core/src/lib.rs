//! Dictionary-free, sense-level orthogonal mapping between two embedding
//! spaces, learned from token-aligned parallel embedding corpora.
//!
//! The pipeline collects per-type (target, source) contextual vector pairs
//! through one-to-one word alignments, removes anisotropy with iterative
//! normalization, clusters each frequent type's target vectors into senses,
//! averages every cluster into a column-aligned anchor pair, and solves the
//! orthogonal Procrustes problem over the anchors. The trained artifact
//! replays the normalization and the map on unseen vectors.
//!
//! Modules follow the pipeline stages:
//!
//! - [`linalg`]: matrices, the Procrustes solver, map application
//! - [`isotropy`]: anisotropy scoring and iterative normalization
//! - [`corpus`]: corpus/alignment ingestion and type-pair collection
//! - [`cluster`]: k-means, elbow selection, sense-anchor derivation
//! - [`pipeline`]: end-to-end training, transfer, artifact IO
//! - [`synth`]: seeded synthetic corpora with known ground truth
//! - [`eval`]: nearest-neighbor retrieval precision
//! - [`vecio`]: word2vec text format

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod isotropy;
pub mod linalg;
pub mod pipeline;
pub mod synth;
pub mod vecio;

mod svd;

pub use error::{Error, Result};
