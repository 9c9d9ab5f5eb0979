//! Accuracy prediction for convolutional network architectures, without
//! training them.
//!
//! The pipeline: sample architectures from a constrained layer-by-layer
//! search space ([`archspace`]), infer per-layer shapes and costs
//! ([`shape`]), encode layers into 14-feature vectors ([`encoding`]),
//! store and select experiments by dataset difficulty ([`store`]), train a
//! small stacked-LSTM surrogate on layer pairs ([`predictor`] on top of
//! [`nn`]), then drive tournament-selection architecture search with the
//! surrogate alone ([`evolve`]) and evaluate prediction quality
//! ([`metrics`]).
//!
//! Everything seeded is bit-reproducible; see [`rng`] for the generator
//! contract and its test vectors.

pub mod archspace;
pub mod cli;
pub mod encoding;
pub mod evolve;
pub mod metrics;
pub mod nn;
pub mod predictor;
pub mod rng;
pub mod shape;
pub mod store;

/// Version tag written into every store record, registry, architecture
/// file, and model file.
pub const SCHEMA_VERSION: u32 = 1;
