//! Sparse-autoencoder feature pipeline for document-level binary prediction.
//!
//! The crate consumes token-level SAE activation dumps, sum-pools them into
//! one signature per document, labels documents by standardized unexpected
//! earnings, scores every SAE dimension for class separation, keeps the top-k
//! and fits an L2-regularized logistic regression on what survives.
//!
//! Data-parallel loops (corpus pooling, per-dimension scoring, split search,
//! grid search, synthetic generation) use rayon when the default `parallel`
//! feature is on and fall back to plain iterators otherwise. Results are
//! identical either way.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actstore;
pub mod error;
pub mod featsel;
pub mod gbdt;
pub mod labeling;
pub mod linmodel;
pub mod matrix;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod pooling;
pub mod sae;
pub mod synth;

mod binio;
mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
