//! Frequency consolidation priors.
//!
//! Builds low/full-frequency signed-distance supervision with an FFT Poisson
//! solver and radial spectrum truncation, trains a two-branch conditional
//! neural SDF whose low-frequency embedding is `[shape identity ‖ corruption]`,
//! and sharpens unseen low-frequency observations by fitting the embeddings
//! with the low branch frozen and decoding the identity with the full branch.

pub mod consolidation;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod neural;
pub mod seed;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
