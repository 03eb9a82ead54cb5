//! Training data: band-limited observation ladders, query batches, storage.

pub mod builder;
pub mod corpus;
pub mod store;

use std::path::Path;

use log::warn;
use rayon::prelude::*;

pub use builder::{
    build_query_batches, build_training_shape, GenerationConfig, Observation, PairSampler,
    TrainingShape,
};
pub use store::{read_dataset, write_dataset, Dataset, DatasetManifest, StoredShape};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::seed::derive_seed;

/// A source mesh awaiting conversion.
#[derive(Debug, Clone)]
pub struct SourceShape {
    pub id: String,
    pub source: String,
    pub mesh: TriangleMesh,
}

/// Builds, batches and writes every shape. Rejected shapes are logged and
/// listed in the manifest; other errors abort.
pub fn build_dataset(
    sources: &[SourceShape],
    config: &GenerationConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    let query_seed = derive_seed(config.seed, "queries", 0);
    let built: Vec<Result<(builder::TrainingShape, Vec<crate::geometry::QueryBatch>)>> = sources
        .par_iter()
        .map(|s| {
            let shape = build_training_shape(&s.id, &s.source, &s.mesh, config)?;
            let batches = build_query_batches(&shape, config.queries_per_observation, query_seed)?;
            Ok((shape, batches))
        })
        .collect();
    let mut shapes = Vec::new();
    let mut rejected = Vec::new();
    for (s, r) in sources.iter().zip(built) {
        match r {
            Ok(pair) => shapes.push(pair),
            Err(Error::ShapeRejected(why)) => {
                warn!("rejected {why}");
                rejected.push((s.id.clone(), why));
            }
            Err(e) => return Err(e),
        }
    }
    let mut manifest = write_dataset(out_dir, config, query_seed, &shapes)?;
    if !rejected.is_empty() {
        manifest.rejected = rejected;
        store::write_manifest(out_dir, &manifest)?;
    }
    Ok(manifest)
}
