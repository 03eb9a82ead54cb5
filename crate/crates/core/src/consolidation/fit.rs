//! Test-time recovery of both embeddings against frozen decoders.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ingest::ObservationInput;
use crate::error::{Error, Result};
use crate::geometry::sampling::{SIGMA_BROAD, SIGMA_NEAR};
use crate::geometry::{sample_queries, SignedDistance};
use crate::neural::{random_embedding, Branch, ForwardCache, GradientBundle};
use crate::seed::derive_seed;
use crate::training::{adam_step, AdamHyper, AdamState, PriorModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    /// Fresh draws from the training initializer.
    Random,
    /// Means of the trained codes.
    TrainingMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr: f64,
    pub queries_per_iter: usize,
    pub seed: u64,
    pub init: EmbeddingInit,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 800,
            lr: 0.005,
            queries_per_iter: 16_384,
            seed: 0,
            init: EmbeddingInit::Random,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("fit needs at least one iteration"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("fit learning rate must be positive"));
        }
        if self.queries_per_iter == 0 || !self.queries_per_iter.is_multiple_of(2) {
            return Err(Error::invalid("queries_per_iter must be positive and even"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub e_full: Array1<f32>,
    pub e_corr: Array1<f32>,
    /// Loss before each update.
    pub loss_history: Vec<f64>,
    pub best_loss: f64,
    /// Set when a non-finite loss stopped the fit; the embeddings are then
    /// the best recorded ones.
    pub aborted: bool,
}

pub fn initial_embeddings(model: &PriorModel, config: &FitConfig) -> (Array1<f32>, Array1<f32>) {
    let e = model.meta.arch.embed_dim;
    match config.init {
        EmbeddingInit::Random => (
            random_embedding(e, derive_seed(config.seed, "fit-init-full", 0)),
            random_embedding(e, derive_seed(config.seed, "fit-init-corruption", 0)),
        ),
        EmbeddingInit::TrainingMean => {
            let mean = |m: &Array2<f32>| {
                m.mean_axis(ndarray::Axis(0))
                    .unwrap_or_else(|| Array1::zeros(e))
            };
            (
                mean(model.embeddings.full_matrix()),
                mean(model.embeddings.corruption_matrix()),
            )
        }
    }
}

pub fn fit_embedding(
    obs: &ObservationInput,
    model: &PriorModel,
    config: &FitConfig,
) -> Result<FitResult> {
    let (f, c) = initial_embeddings(model, config);
    fit_embedding_from(obs, model, config, f, c)
}

/// Minimizes the low-branch error over `(e_F, e_C)` starting from the given
/// codes. The model is only read.
pub fn fit_embedding_from(
    obs: &ObservationInput,
    model: &PriorModel,
    config: &FitConfig,
    e_full: Array1<f32>,
    e_corr: Array1<f32>,
) -> Result<FitResult> {
    config.validate()?;
    let e = model.meta.arch.embed_dim;
    if e_full.len() != e || e_corr.len() != e {
        return Err(Error::invalid(format!("embeddings must have length {e}")));
    }
    let mut codes = [e_full.to_vec(), e_corr.to_vec()];
    let mut adam = AdamState::new(&[e, e]);
    let hyper = AdamHyper::default();
    let mut grads = GradientBundle::<f32>::zeros(&model.meta.arch)?;
    let mut cache = ForwardCache::new();
    let n = config.queries_per_iter;
    let mut history = Vec::with_capacity(config.iterations);
    let mut best = (f64::INFINITY, codes.clone());

    for it in 0..config.iterations {
        let queries = sample_queries(
            &obs.surface,
            n,
            SIGMA_BROAD,
            SIGMA_NEAR,
            derive_seed(config.seed, "fit-iteration", it as u64),
        )?;
        let q32 = Array2::from_shape_fn((n, 3), |(i, j)| queries[i][j] as f32);
        let points: Vec<nalgebra::Point3<f64>> = q32
            .rows()
            .into_iter()
            .map(|r| nalgebra::Point3::new(r[0] as f64, r[1] as f64, r[2] as f64))
            .collect();
        let target: Array1<f32> = obs
            .oracle
            .signed_distances(&points)
            .into_iter()
            .map(|d| d as f32)
            .collect();

        let ef = Array1::from(codes[0].clone());
        let ec = Array1::from(codes[1].clone());
        let pred = model.params.forward_cached(
            Branch::Low,
            ef.view(),
            Some(ec.view()),
            q32.view(),
            &mut cache,
        )?;
        let diff = &pred - &target;
        let loss = diff.iter().map(|&d| (d as f64).powi(2)).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            log::warn!("fit aborted at iteration {it}: loss is {loss}");
            return Ok(FitResult {
                e_full: Array1::from(best.1[0].clone()),
                e_corr: Array1::from(best.1[1].clone()),
                loss_history: history,
                best_loss: best.0,
                aborted: true,
            });
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, codes.clone());
        }
        grads.e_full.fill(0.0);
        grads.e_corr.fill(0.0);
        let g = diff.mapv(|d| 2.0 * d / n as f32);
        model
            .params
            .backward_embeddings(&mut cache, g.view(), &mut grads)?;
        let (gf, gc) = (grads.e_full.to_vec(), grads.e_corr.to_vec());
        let [cf, cc] = &mut codes;
        adam_step(
            &mut [cf, cc],
            &[&gf, &gc],
            &mut adam,
            config.lr,
            &hyper,
            &[],
        )?;
        if it % 100 == 0 {
            log::debug!("fit iteration {it}: loss {loss:.4e}");
        }
    }
    let [f, c] = codes;
    Ok(FitResult {
        e_full: Array1::from(f),
        e_corr: Array1::from(c),
        loss_history: history,
        best_loss: best.0,
        aborted: false,
    })
}
