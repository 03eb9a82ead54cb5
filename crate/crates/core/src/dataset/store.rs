//! On-disk dataset: per-shape directories of binary PLY meshes and `.fcpb`
//! query batches, indexed by `manifest.json`.
//!
//! Batch layout (little-endian): magic `FCPB`, u32 version, u32 observation
//! id, u32 shape-id length, shape-id UTF-8 bytes, u64 record count, then per
//! record `qx qy qz s_low s_full` as f32.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::builder::{GenerationConfig, Observation, TrainingShape};
use crate::error::{Error, Result};
use crate::geometry::io::{read_mesh, write_atomic, write_mesh};
use crate::geometry::{NormalizationTransform, QueryBatch};
use crate::spectral::FrequencyCutoff;

pub const MANIFEST_VERSION: u32 = 1;
pub const BATCH_VERSION: u32 = 1;
const BATCH_MAGIC: &[u8; 4] = b"FCPB";
const RECORD_BYTES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub index: u32,
    pub cutoff: FrequencyCutoff,
    pub mesh: String,
    pub batch: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub id: String,
    pub source: String,
    pub transform: NormalizationTransform,
    pub seed: u64,
    pub full_mesh: String,
    pub observations: Vec<ObservationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub generation: GenerationConfig,
    /// Seed the query batches were drawn with.
    pub query_seed: u64,
    pub shapes: Vec<ShapeRecord>,
    /// Shapes that failed to build, with the reason.
    #[serde(default)]
    pub rejected: Vec<(String, String)>,
}

/// A shape read back from disk together with its batches (possibly empty).
#[derive(Debug, Clone)]
pub struct StoredShape {
    pub shape: TrainingShape,
    pub batches: Vec<QueryBatch>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub shapes: Vec<StoredShape>,
}

fn observation_stem(index: usize, cutoff: &FrequencyCutoff) -> String {
    format!("{index}_{:.3}", cutoff.frequency)
}

pub fn batch_bytes(batch: &QueryBatch) -> Vec<u8> {
    let id = batch.shape_id.as_bytes();
    let mut out = Vec::with_capacity(24 + id.len() + batch.len() * RECORD_BYTES);
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    out.extend_from_slice(&batch.observation_id.to_le_bytes());
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(batch.len() as u64).to_le_bytes());
    for i in 0..batch.len() {
        for v in batch.queries[i]
            .iter()
            .chain([&batch.sdf_low[i], &batch.sdf_full[i]])
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_batch(bytes: &[u8], path: &Path) -> Result<QueryBatch> {
    let truncated = |detail: String| Error::TruncatedFile {
        path: path.to_path_buf(),
        detail,
    };
    let u32_at = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| truncated(format!("header ends at byte {}", bytes.len())))
    };
    if bytes.len() < 4 || &bytes[..4] != BATCH_MAGIC {
        return Err(Error::format(
            "fcpb",
            format!("{} does not start with FCPB", path.display()),
        ));
    }
    let version = u32_at(4)?;
    if version != BATCH_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: BATCH_VERSION,
        });
    }
    let observation_id = u32_at(8)?;
    let id_len = u32_at(12)? as usize;
    let id_end = 16 + id_len;
    let id = bytes
        .get(16..id_end)
        .ok_or_else(|| truncated("shape id cut short".into()))?;
    let shape_id = String::from_utf8(id.to_vec())
        .map_err(|_| Error::format("fcpb", "shape id is not UTF-8"))?;
    let count = bytes
        .get(id_end..id_end + 8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        .ok_or_else(|| truncated("record count missing".into()))? as usize;
    let body = &bytes[id_end + 8..];
    let expected = count
        .checked_mul(RECORD_BYTES)
        .ok_or_else(|| truncated("record count overflows".into()))?;
    if body.len() != expected {
        return Err(truncated(format!(
            "{count} records need {expected} bytes, found {}",
            body.len()
        )));
    }
    let mut queries = Vec::with_capacity(count);
    let mut low = Vec::with_capacity(count);
    let mut full = Vec::with_capacity(count);
    for rec in body.chunks_exact(RECORD_BYTES) {
        let f: Vec<f32> = rec
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        queries.push([f[0], f[1], f[2]]);
        low.push(f[3]);
        full.push(f[4]);
    }
    QueryBatch::new(shape_id, observation_id, queries, low, full)
}

pub fn write_batch(path: &Path, batch: &QueryBatch) -> Result<()> {
    write_atomic(path, &batch_bytes(batch))
}

pub fn read_batch(path: &Path) -> Result<QueryBatch> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_batch(&bytes, path)
}

/// Writes one shape's meshes and batches under `<out>/<id>/` and returns its
/// manifest record. `batches` may be empty (meshes only).
pub fn write_shape(
    out_dir: &Path,
    shape: &TrainingShape,
    batches: &[QueryBatch],
) -> Result<ShapeRecord> {
    if !batches.is_empty() && batches.len() != shape.observations.len() {
        return Err(Error::invalid(format!(
            "{}: {} batches for {} observations",
            shape.shape_id,
            batches.len(),
            shape.observations.len()
        )));
    }
    let dir = out_dir.join(&shape.shape_id);
    write_mesh(&dir.join("full.ply"), &shape.full_mesh)?;
    let mut observations = Vec::with_capacity(shape.observations.len());
    for (i, obs) in shape.observations.iter().enumerate() {
        let stem = observation_stem(i, &obs.cutoff);
        let mesh = format!("{}/obs_{stem}.ply", shape.shape_id);
        write_mesh(&out_dir.join(&mesh), &obs.mesh)?;
        let batch = match batches.get(i) {
            Some(b) => {
                let rel = format!("{}/batch_{stem}.fcpb", shape.shape_id);
                write_batch(&out_dir.join(&rel), b)?;
                Some(rel)
            }
            None => None,
        };
        observations.push(ObservationRecord {
            index: i as u32,
            cutoff: obs.cutoff,
            mesh,
            batch,
        });
    }
    Ok(ShapeRecord {
        id: shape.shape_id.clone(),
        source: shape.source.clone(),
        transform: shape.transform,
        seed: shape.seed,
        full_mesh: format!("{}/full.ply", shape.shape_id),
        observations,
    })
}

pub fn write_manifest(out_dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(&out_dir.join("manifest.json"), text.as_bytes())
}

/// Writes every shape and then the manifest.
pub fn write_dataset(
    out_dir: &Path,
    generation: &GenerationConfig,
    query_seed: u64,
    shapes: &[(TrainingShape, Vec<QueryBatch>)],
) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records = shapes
        .iter()
        .map(|(shape, batches)| write_shape(out_dir, shape, batches))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        generation: generation.clone(),
        query_seed,
        shapes: records,
        rejected: Vec::new(),
    };
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            path,
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    Ok(manifest)
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

pub fn read_shape(dir: &Path, record: &ShapeRecord) -> Result<StoredShape> {
    let full_mesh = read_mesh(&resolve(dir, &record.full_mesh))?;
    let mut observations = Vec::with_capacity(record.observations.len());
    let mut batches = Vec::new();
    for obs in &record.observations {
        observations.push(Observation {
            cutoff: obs.cutoff,
            mesh: read_mesh(&resolve(dir, &obs.mesh))?,
        });
        if let Some(b) = &obs.batch {
            batches.push(read_batch(&resolve(dir, b))?);
        }
    }
    Ok(StoredShape {
        shape: TrainingShape {
            shape_id: record.id.clone(),
            source: record.source.clone(),
            transform: record.transform,
            seed: record.seed,
            full_mesh,
            observations,
        },
        batches,
    })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let shapes = manifest
        .shapes
        .iter()
        .map(|r| read_shape(dir, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, shapes })
}
