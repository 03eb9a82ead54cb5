//! Training shapes: full-band coverage plus band-limited observations, and
//! the query batches that supervise them.

use log::{debug, info};
use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::evaluate_pair;
use crate::geometry::sampling::{SIGMA_BROAD, SIGMA_NEAR};
use crate::geometry::{
    normalize_mesh, sample_queries, sample_surface, MeshSdf, NormalizationTransform,
    OrientedPointCloud, QueryBatch, SignedDistance, TriangleMesh,
};
use crate::seed::derive_seed;
use crate::spectral::poisson::{sample_cutoff, sample_extra_cutoff, SUBBANDS};
use crate::spectral::{FrequencyCutoff, SpectralReconstruction, DEFAULT_SMOOTHING};

/// Knobs for turning one source mesh into training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub resolution: usize,
    pub cloud_points: usize,
    pub smoothing: f64,
    /// Observations drawn from the extra band on top of the six subbands.
    pub extra_observations: usize,
    pub queries_per_observation: usize,
    /// Shapes whose full-band mesh is further than this (CD_L1, normalized
    /// units) from the source are rejected.
    pub reject_cd_l1: f64,
    pub reject_samples: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            cloud_points: 100_000,
            smoothing: DEFAULT_SMOOTHING,
            extra_observations: 0,
            queries_per_observation: 16_384,
            reject_cd_l1: 0.05,
            reject_samples: 10_000,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        crate::spectral::grid::check_resolution(self.resolution)?;
        if self.cloud_points == 0 {
            return Err(Error::invalid("cloud_points must be positive"));
        }
        if self.queries_per_observation == 0 || !self.queries_per_observation.is_multiple_of(2) {
            return Err(Error::invalid(
                "queries_per_observation must be positive and even",
            ));
        }
        if !(self.smoothing >= 0.0 && self.reject_cd_l1 > 0.0) || self.reject_samples == 0 {
            return Err(Error::invalid(
                "smoothing must be >= 0, reject_cd_l1 and reject_samples positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub cutoff: FrequencyCutoff,
    pub mesh: TriangleMesh,
}

#[derive(Debug, Clone)]
pub struct TrainingShape {
    pub shape_id: String,
    /// Where the source mesh came from; free-form.
    pub source: String,
    pub transform: NormalizationTransform,
    pub seed: u64,
    pub full_mesh: TriangleMesh,
    pub observations: Vec<Observation>,
}

fn rejected(id: &str, why: impl std::fmt::Display) -> Error {
    Error::ShapeRejected(format!("{id}: {why}"))
}

/// Cutoffs for one shape: one per subband in order, then the extras.
pub fn observation_cutoffs(shape_seed: u64, extras: usize) -> Vec<FrequencyCutoff> {
    let mut out: Vec<FrequencyCutoff> = (0..SUBBANDS.len())
        .map(|i| {
            sample_cutoff(i, derive_seed(shape_seed, "cutoff", i as u64)).expect("valid subband")
        })
        .collect();
    out.extend(
        (0..extras).map(|j| sample_extra_cutoff(derive_seed(shape_seed, "extra-cutoff", j as u64))),
    );
    out
}

/// Normalizes `mesh`, reconstructs it at full band and at every observation
/// cutoff. The same dense cloud feeds every reconstruction.
pub fn build_training_shape(
    shape_id: &str,
    source: &str,
    mesh: &TriangleMesh,
    config: &GenerationConfig,
) -> Result<TrainingShape> {
    config.validate()?;
    let (normalized, transform) = normalize_mesh(mesh).map_err(|e| rejected(shape_id, e))?;
    let seed = derive_seed(config.seed, shape_id, 0);
    let cloud = sample_surface(
        &normalized,
        config.cloud_points,
        derive_seed(seed, "cloud", 0),
    )
    .map_err(|e| rejected(shape_id, e))?;
    let rec = SpectralReconstruction::new(&cloud, config.resolution, config.smoothing)
        .map_err(|e| rejected(shape_id, e))?;
    let full_mesh = rec
        .mesh(&FrequencyCutoff::nyquist(config.resolution))
        .map_err(|e| rejected(shape_id, format!("full band: {e}")))?;

    let fidelity = evaluate_pair(
        &full_mesh,
        &normalized,
        config.reject_samples,
        derive_seed(seed, "fidelity", 0),
    )?;
    if fidelity.cd_l1 > config.reject_cd_l1 {
        return Err(rejected(
            shape_id,
            format!(
                "full-band reconstruction is {:.4} from the source (limit {})",
                fidelity.cd_l1, config.reject_cd_l1
            ),
        ));
    }
    debug!("{shape_id}: full band CD_L1 {:.5}", fidelity.cd_l1);

    let observations = observation_cutoffs(seed, config.extra_observations)
        .into_iter()
        .map(|cutoff| {
            let mesh = rec
                .mesh(&cutoff)
                .map_err(|e| rejected(shape_id, format!("cutoff {}: {e}", cutoff.frequency)))?;
            Ok(Observation { cutoff, mesh })
        })
        .collect::<Result<Vec<_>>>()?;
    info!("{shape_id}: {} observations built", observations.len());
    Ok(TrainingShape {
        shape_id: shape_id.to_string(),
        source: source.to_string(),
        transform,
        seed,
        full_mesh,
        observations,
    })
}

/// Signed-distance oracles for one (observation, coverage) pair plus the
/// surface samples that queries are drawn around.
pub struct PairSampler {
    low: MeshSdf,
    full: MeshSdf,
    surface: OrientedPointCloud,
}

impl PairSampler {
    /// Queries are centered on samples from both surfaces, half each.
    pub fn new(
        low: &TriangleMesh,
        full: &TriangleMesh,
        surface_points: usize,
        seed: u64,
    ) -> Result<Self> {
        let half = surface_points.div_ceil(2).max(1);
        let a = sample_surface(full, half, derive_seed(seed, "surface-full", 0))?;
        let b = sample_surface(low, half, derive_seed(seed, "surface-low", 0))?;
        Ok(Self {
            low: MeshSdf::new(low)?,
            full: MeshSdf::new(full)?,
            surface: a.concat(&b),
        })
    }

    pub fn batch(
        &self,
        shape_id: &str,
        observation_id: u32,
        n: usize,
        seed: u64,
    ) -> Result<QueryBatch> {
        let queries: Vec<[f32; 3]> =
            sample_queries(&self.surface, n, SIGMA_BROAD, SIGMA_NEAR, seed)?
                .iter()
                .map(|q| [q.x as f32, q.y as f32, q.z as f32])
                .collect();
        // Distances are taken at the rounded positions the network will see.
        let points: Vec<Point3<f64>> = queries
            .iter()
            .map(|q| Point3::new(q[0] as f64, q[1] as f64, q[2] as f64))
            .collect();
        let low = self
            .low
            .signed_distances(&points)
            .into_iter()
            .map(|d| d as f32)
            .collect();
        let full = self
            .full
            .signed_distances(&points)
            .into_iter()
            .map(|d| d as f32)
            .collect();
        QueryBatch::new(shape_id, observation_id, queries, low, full)
    }
}

/// One batch per observation, each with freshly drawn queries.
pub fn build_query_batches(
    shape: &TrainingShape,
    queries_per_obs: usize,
    seed: u64,
) -> Result<Vec<QueryBatch>> {
    shape
        .observations
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let s = derive_seed(seed, &shape.shape_id, i as u64);
            let sampler = PairSampler::new(&obs.mesh, &shape.full_mesh, queries_per_obs, s)?;
            sampler.batch(
                &shape.shape_id,
                i as u32,
                queries_per_obs,
                derive_seed(s, "queries", 0),
            )
        })
        .collect()
}
