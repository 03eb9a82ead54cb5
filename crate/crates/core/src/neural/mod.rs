//! Two-branch conditional SDF: embedding mappers and skip-connected
//! decoders with exact reverse-mode gradients.

pub mod config;
pub mod container;
pub mod layers;
pub mod params;

pub use config::ArchConfig;
pub use container::{NamedTensor, TensorContainer};
pub use params::{
    init_params, random_embedding, Branch, DecoderParams, EmbeddingTable, ForwardCache,
    GradientBundle,
};
