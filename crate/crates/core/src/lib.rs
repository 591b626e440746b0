//! Hard-negative-weighted contrastive alignment of 2D view embeddings and
//! 3D point clouds, on portable embedding files.
//!
//! The pipeline: [`synth`] plants a desk-scale dataset (or real embeddings
//! arrive as EMB1 files per [`data`]); [`sim`] scores 3D pairs through view
//! embeddings (`i2i`), landmark descriptors (`i2l2`), or geometric
//! baselines; [`store`] precomputes and persists per-category similarity
//! blocks; [`loss`] turns batch similarities into importance weights and a
//! weighted contrastive objective; [`train`] fits the point encoder in
//! [`encoder`]; [`eval`] measures zero-shot classification, linear-probe
//! accuracy, and cross-modal retrieval. [`oracle`] holds independent
//! brute-force references for tests.

// indexed loops mirror the matrix math and keep reduction order explicit
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod loss;
pub mod numkit;
pub mod oracle;
pub mod sim;
pub mod store;
pub mod synth;
pub mod train;

pub use error::{Error, ExitClass, Result};
