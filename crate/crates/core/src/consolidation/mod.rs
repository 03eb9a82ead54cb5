//! Sharpening unseen low-frequency observations with a trained prior.

mod fit;
mod ingest;
mod sharpen;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use fit::{
    fit_embedding, fit_embedding_from, initial_embeddings, EmbeddingInit, FitConfig, FitResult,
};
pub use ingest::{
    ingest_observation, IngestConfig, ObservationData, ObservationInput, Oracle,
    MAX_BOUNDARY_FRACTION,
};
pub use sharpen::{decode_grid, sharpen};

use crate::error::Result;
use crate::geometry::TriangleMesh;
use crate::neural::Branch;
use crate::training::PriorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ingest_s: f64,
    pub fit_s: f64,
    pub sharpen_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub input_kind: String,
    pub fit: FitConfig,
    pub resolution: usize,
    pub loss_history: Vec<f64>,
    pub best_loss: f64,
    pub aborted: bool,
    pub e_full: Vec<f32>,
    pub e_corr: Vec<f32>,
    pub hash_low: String,
    pub hash_full: String,
    pub vertices: usize,
    pub triangles: usize,
    pub timings: Timings,
}

/// Ingest, fit, sharpen.
pub fn consolidate(
    data: &ObservationData,
    model: &PriorModel,
    ingest: &IngestConfig,
    fit: &FitConfig,
    resolution: usize,
) -> Result<(TriangleMesh, ConsolidationReport)> {
    let t0 = Instant::now();
    let obs = ingest_observation(data, ingest)?;
    let t1 = Instant::now();
    let result = fit_embedding(&obs, model, fit)?;
    let t2 = Instant::now();
    let mesh = sharpen(
        &model.params,
        result.e_full.view(),
        resolution,
        &obs.transform,
    )?;
    let t3 = Instant::now();
    let report = ConsolidationReport {
        input_kind: obs.kind.to_string(),
        fit: fit.clone(),
        resolution,
        best_loss: result.best_loss,
        aborted: result.aborted,
        e_full: result.e_full.to_vec(),
        e_corr: result.e_corr.to_vec(),
        loss_history: result.loss_history,
        hash_low: model.branch_hash(Branch::Low),
        hash_full: model.branch_hash(Branch::Full),
        vertices: mesh.vertices().len(),
        triangles: mesh.triangles().len(),
        timings: Timings {
            ingest_s: (t1 - t0).as_secs_f64(),
            fit_s: (t2 - t1).as_secs_f64(),
            sharpen_s: (t3 - t2).as_secs_f64(),
        },
    };
    Ok((mesh, report))
}
