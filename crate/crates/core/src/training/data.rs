//! Per-iteration supervision: which pair to visit and which queries to use.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::dataset::{Dataset, PairSampler, TrainingShape};
use crate::error::{Error, Result};
use crate::geometry::QueryBatch;
use crate::seed::derive_seed;

struct PairData {
    shape: usize,
    observation: usize,
    batch: Option<QueryBatch>,
    sampler: Option<PairSampler>,
}

/// The (shape, observation) pairs visited round robin, shape-major.
pub struct TrainingData {
    layout: Vec<(String, usize)>,
    pairs: Vec<PairData>,
}

/// Queries and targets for one iteration.
pub struct IterationBatch {
    pub shape: usize,
    pub observation: usize,
    pub queries: Array2<f32>,
    pub sdf_low: Array1<f32>,
    pub sdf_full: Array1<f32>,
}

impl TrainingData {
    pub fn from_shapes(
        shapes: &[(TrainingShape, Vec<QueryBatch>)],
        config: &TrainConfig,
    ) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::invalid("training needs at least one shape"));
        }
        let mut layout = Vec::new();
        let mut pairs = Vec::new();
        for (s, (shape, batches)) in shapes.iter().enumerate() {
            let count = config.train_observations.min(shape.observations.len());
            if count == 0 {
                return Err(Error::invalid(format!(
                    "{} has no observations",
                    shape.shape_id
                )));
            }
            layout.push((shape.shape_id.clone(), count));
            for o in 0..count {
                let sampler = if config.online_queries {
                    let seed = derive_seed(config.seed, &shape.shape_id, o as u64);
                    Some(PairSampler::new(
                        &shape.observations[o].mesh,
                        &shape.full_mesh,
                        config.queries_per_iter,
                        seed,
                    )?)
                } else {
                    None
                };
                let batch = batches.get(o).cloned();
                if batch.is_none() && sampler.is_none() {
                    return Err(Error::invalid(format!(
                        "{} observation {o} has no stored batch; enable online_queries",
                        shape.shape_id
                    )));
                }
                pairs.push(PairData {
                    shape: s,
                    observation: o,
                    batch,
                    sampler,
                });
            }
        }
        Ok(Self { layout, pairs })
    }

    pub fn from_dataset(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        let shapes: Vec<(TrainingShape, Vec<QueryBatch>)> = dataset
            .shapes
            .iter()
            .map(|s| (s.shape.clone(), s.batches.clone()))
            .collect();
        Self::from_shapes(&shapes, config)
    }

    /// Shape ids with the number of trained observations each.
    pub fn layout(&self) -> &[(String, usize)] {
        &self.layout
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        let p = &self.pairs[index];
        (p.shape, p.observation)
    }

    /// Batch for visiting pair `index` with `n` queries. Stored batches are
    /// subsampled half from the broad band and half from the near band.
    pub fn batch(&self, index: usize, n: usize, seed: u64) -> Result<IterationBatch> {
        let p = &self.pairs[index];
        let owned;
        let (batch, rows): (&QueryBatch, Vec<usize>) = match (&p.sampler, &p.batch) {
            (Some(sampler), _) => {
                owned = sampler.batch(&self.layout[p.shape].0, p.observation as u32, n, seed)?;
                (&owned, (0..n).collect())
            }
            (None, Some(b)) => {
                let total = b.len();
                if n >= total {
                    (b, (0..total).collect())
                } else {
                    let half = total / 2;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut rows: Vec<usize> = sample(&mut rng, half, n / 2).into_iter().collect();
                    rows.extend(
                        sample(&mut rng, total - half, n - n / 2)
                            .into_iter()
                            .map(|i| i + half),
                    );
                    rows.sort_unstable();
                    (b, rows)
                }
            }
            (None, None) => unreachable!("checked at construction"),
        };
        Ok(IterationBatch {
            shape: p.shape,
            observation: p.observation,
            queries: Array2::from_shape_fn((rows.len(), 3), |(i, j)| batch.queries[rows[i]][j]),
            sdf_low: rows.iter().map(|&r| batch.sdf_low[r]).collect(),
            sdf_full: rows.iter().map(|&r| batch.sdf_full[r]).collect(),
        })
    }
}
