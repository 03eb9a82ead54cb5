//! The trained prior as stored on disk.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::neural::{
    ArchConfig, Branch, DecoderParams, EmbeddingTable, NamedTensor, TensorContainer,
};
use crate::seed::sha256_hex;

pub const CHECKPOINT_KIND: &str = "fcp-prior";
pub const EMBEDDINGS_FULL: &str = "embeddings.full";
pub const EMBEDDINGS_CORRUPTION: &str = "embeddings.corruption";

/// JSON metadata stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub shape_ids: Vec<String>,
    pub observation_counts: Vec<usize>,
    /// Completed iterations.
    pub iteration: u64,
    pub adam_decoder_step: u64,
    pub adam_embedding_step: u64,
}

impl CheckpointMeta {
    pub fn parse(container: &TensorContainer) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_str(&container.metadata)?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::format(
                "checkpoint",
                format!("unexpected kind {:?}", meta.kind),
            ));
        }
        meta.arch.validate()?;
        Ok(meta)
    }
}

/// Decoders plus the per-shape embeddings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    pub meta: CheckpointMeta,
    pub params: DecoderParams<f32>,
    pub embeddings: EmbeddingTable<f32>,
}

pub(crate) fn tensor_into(
    container: &TensorContainer,
    name: &str,
    dst: &mut [f32],
    dims: &[usize],
) -> Result<()> {
    let t = container.require(name)?;
    if t.dims != dims {
        return Err(Error::format(
            "checkpoint",
            format!("{name} has dims {:?}, expected {dims:?}", t.dims),
        ));
    }
    dst.copy_from_slice(&t.data);
    Ok(())
}

impl PriorModel {
    pub fn from_container(container: &TensorContainer) -> Result<Self> {
        let meta = CheckpointMeta::parse(container)?;
        let mut params = DecoderParams::<f32>::zeros(&meta.arch)?;
        let specs: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(name, dims, _)| (name, dims))
            .collect();
        for ((name, dims), dst) in specs.iter().zip(params.tensors_mut()) {
            tensor_into(container, name, dst, dims)?;
        }
        let e = meta.arch.embed_dim;
        let full = container.require(EMBEDDINGS_FULL)?;
        let corr = container.require(EMBEDDINGS_CORRUPTION)?;
        let as_matrix = |t: &NamedTensor| -> Result<Array2<f32>> {
            if t.dims.len() != 2 || t.dims[1] != e {
                return Err(Error::format(
                    "checkpoint",
                    format!("{} has dims {:?}", t.name, t.dims),
                ));
            }
            Array2::from_shape_vec((t.dims[0], e), t.data.clone())
                .map_err(|err| Error::format("checkpoint", err.to_string()))
        };
        let embeddings = EmbeddingTable::from_parts(
            meta.shape_ids.clone(),
            as_matrix(full)?,
            as_matrix(corr)?,
            &meta.observation_counts,
        )?;
        if !params.is_finite() {
            return Err(Error::format("checkpoint", "non-finite decoder weights"));
        }
        Ok(Self {
            meta,
            params,
            embeddings,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&TensorContainer::read(path)?)
    }

    /// Hash of one branch's mapper and decoder weights.
    pub fn branch_hash(&self, branch: Branch) -> String {
        params_hash(&self.params.branch_tensors(branch))
    }

    /// Mean of the training `e_F` codes.
    pub fn mean_full_embedding(&self) -> ndarray::Array1<f32> {
        self.embeddings
            .full_matrix()
            .mean_axis(ndarray::Axis(0))
            .unwrap_or_else(|| ndarray::Array1::zeros(self.meta.arch.embed_dim))
    }
}

/// SHA-256 over tensor names, dims and little-endian values.
pub fn params_hash(tensors: &[(String, Vec<usize>, &[f32])]) -> String {
    let mut bytes = Vec::new();
    for (name, dims, data) in tensors {
        bytes.extend_from_slice(name.as_bytes());
        for d in dims {
            bytes.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}
