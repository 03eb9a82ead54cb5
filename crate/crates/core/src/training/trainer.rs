//! Joint auto-decoder optimisation of both branches and all embeddings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::TrainConfig;
use super::data::TrainingData;
use super::loss::branch_losses;
use super::model::{
    tensor_into, CheckpointMeta, PriorModel, CHECKPOINT_KIND, EMBEDDINGS_CORRUPTION,
    EMBEDDINGS_FULL,
};
use crate::error::{Error, Result};
use crate::neural::{
    init_params, ArchConfig, Branch, DecoderParams, EmbeddingTable, ForwardCache, GradientBundle,
    NamedTensor, TensorContainer,
};
use crate::seed::derive_seed;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub loss_low: f64,
    pub loss_full: f64,
    pub lr_embeddings: f64,
    pub lr_decoders: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,epoch,loss_low,loss_full,lr_emb,lr_dec";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{:.8e},{:.8e},{:.6e},{:.6e}",
            self.iteration,
            self.epoch,
            self.loss_low,
            self.loss_full,
            self.lr_embeddings,
            self.lr_decoders
        )
    }

    pub fn loss(&self) -> f64 {
        self.loss_low + self.loss_full
    }
}

pub struct Trainer {
    pub arch: ArchConfig,
    pub config: TrainConfig,
    pub params: DecoderParams<f32>,
    pub embeddings: EmbeddingTable<f32>,
    adam_decoders: AdamState,
    adam_embeddings: AdamState,
    /// Completed iterations.
    iteration: u64,
    grads: GradientBundle<f32>,
    emb_grads: EmbeddingTable<f32>,
    cache: ForwardCache<f32>,
}

impl Trainer {
    pub fn new(
        arch: &ArchConfig,
        config: &TrainConfig,
        layout: &[(String, usize)],
    ) -> Result<Self> {
        arch.validate()?;
        config.validate()?;
        let (params, embeddings) = init_params::<f32>(arch, layout, config.seed)?;
        Self::assemble(*arch, config.clone(), params, embeddings)
    }

    fn assemble(
        arch: ArchConfig,
        config: TrainConfig,
        params: DecoderParams<f32>,
        embeddings: EmbeddingTable<f32>,
    ) -> Result<Self> {
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.2.len()).collect();
        let emb_sizes: Vec<usize> = embeddings.tensors().iter().map(|t| t.len()).collect();
        let layout: Vec<(String, usize)> = embeddings
            .shape_ids()
            .iter()
            .cloned()
            .zip(embeddings.observation_counts())
            .collect();
        Ok(Self {
            grads: GradientBundle::zeros(&arch)?,
            emb_grads: EmbeddingTable::zeros(&layout, arch.embed_dim),
            cache: ForwardCache::new(),
            adam_decoders: AdamState::new(&sizes),
            adam_embeddings: AdamState::new(&emb_sizes),
            iteration: 0,
            arch,
            config,
            params,
            embeddings,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Iterations in the full schedule for `pairs` pairs.
    pub fn total_iterations(&self, pairs: usize) -> u64 {
        let scheduled = self.config.epochs * pairs as u64;
        self.config
            .max_iterations
            .map_or(scheduled, |m| m.min(scheduled))
    }

    fn check_layout(&self, data: &TrainingData) -> Result<()> {
        let ours: Vec<(String, usize)> = self
            .embeddings
            .shape_ids()
            .iter()
            .cloned()
            .zip(self.embeddings.observation_counts())
            .collect();
        if ours != data.layout() {
            return Err(Error::State(
                "training data layout differs from the embedding table".into(),
            ));
        }
        Ok(())
    }

    /// One optimisation step on the next pair in round-robin order.
    pub fn step(&mut self, data: &TrainingData) -> Result<IterationRecord> {
        self.check_layout(data)?;
        let it = self.iteration;
        let pairs = data.pair_count() as u64;
        let pair = (it % pairs) as usize;
        let epoch = it / pairs;
        let lr_emb = self.config.lr_at(self.config.lr_embeddings, epoch);
        let lr_dec = self.config.lr_at(self.config.lr_decoders, epoch);

        let batch = data.batch(
            pair,
            self.config.queries_per_iter,
            derive_seed(self.config.seed, "iteration", it),
        )?;
        let (s, o) = (batch.shape, batch.observation);
        let n = batch.queries.nrows() as f32;
        self.grads.set_zero();

        let e_full = self.embeddings.e_full(s).to_owned();
        let e_corr = self.embeddings.e_corr(s, o).to_owned();
        let pred_low = self.params.forward_cached(
            Branch::Low,
            e_full.view(),
            Some(e_corr.view()),
            batch.queries.view(),
            &mut self.cache,
        )?;
        let g_low: Array1<f32> = (&pred_low - &batch.sdf_low).mapv(|d| 2.0 * d / n);
        self.params
            .backward(&mut self.cache, g_low.view(), &mut self.grads)?;
        let pred_full = self.params.forward_cached(
            Branch::Full,
            e_full.view(),
            None,
            batch.queries.view(),
            &mut self.cache,
        )?;
        let g_full: Array1<f32> = (&pred_full - &batch.sdf_full).mapv(|d| 2.0 * d / n);
        self.params
            .backward(&mut self.cache, g_full.view(), &mut self.grads)?;

        let diverged = |loss: f64| Error::Diverged {
            iteration: it,
            loss,
        };
        let (loss_low, loss_full) = branch_losses(
            pred_low.view(),
            batch.sdf_low.view(),
            pred_full.view(),
            batch.sdf_full.view(),
        )
        .map_err(|_| diverged(f64::NAN))?;
        if !(loss_low + loss_full).is_finite() || !self.grads.is_finite() {
            return Err(diverged(loss_low + loss_full));
        }

        self.emb_grads.set_zero();
        self.emb_grads
            .accumulate(s, o, self.grads.e_full.view(), self.grads.e_corr.view());
        let hyper = self.config.adam();
        {
            let grads = self.emb_grads.tensors();
            let mut params = self.embeddings.tensors_mut();
            let skip = [false, self.config.freeze_corruption];
            adam_step(
                &mut params,
                &grads,
                &mut self.adam_embeddings,
                lr_emb,
                &hyper,
                &skip,
            )?;
        }
        {
            let grads: Vec<&[f32]> = self
                .grads
                .params
                .tensors()
                .into_iter()
                .map(|t| t.2)
                .collect();
            let mut params = self.params.tensors_mut();
            adam_step(
                &mut params,
                &grads,
                &mut self.adam_decoders,
                lr_dec,
                &hyper,
                &[],
            )?;
        }
        self.iteration += 1;
        Ok(IterationRecord {
            iteration: it,
            epoch,
            loss_low,
            loss_full,
            lr_embeddings: lr_emb,
            lr_decoders: lr_dec,
        })
    }

    /// Runs until `total` iterations have completed, calling `hook` after each.
    pub fn run_until(
        &mut self,
        data: &TrainingData,
        total: u64,
        hook: &mut dyn FnMut(&Trainer, &IterationRecord) -> Result<()>,
    ) -> Result<Vec<IterationRecord>> {
        let mut history = Vec::new();
        while self.iteration < total {
            let record = self.step(data)?;
            hook(self, &record)?;
            history.push(record);
        }
        Ok(history)
    }

    pub fn checkpoint(&self) -> Result<TensorContainer> {
        let meta = CheckpointMeta {
            kind: CHECKPOINT_KIND.into(),
            arch: self.arch,
            train: self.config.clone(),
            shape_ids: self.embeddings.shape_ids().to_vec(),
            observation_counts: self.embeddings.observation_counts(),
            iteration: self.iteration,
            adam_decoder_step: self.adam_decoders.step,
            adam_embedding_step: self.adam_embeddings.step,
        };
        let mut tensors = Vec::new();
        let specs = self.params.tensors();
        for (name, dims, data) in &specs {
            tensors.push(NamedTensor::new(name.clone(), dims.clone(), data.to_vec())?);
        }
        let e = self.arch.embed_dim;
        let emb_names = [EMBEDDINGS_FULL, EMBEDDINGS_CORRUPTION];
        for (name, data) in emb_names.iter().zip(self.embeddings.tensors()) {
            tensors.push(NamedTensor::new(
                *name,
                vec![data.len() / e, e],
                data.to_vec(),
            )?);
        }
        for (i, (name, dims, _)) in specs.iter().enumerate() {
            tensors.push(NamedTensor::new(
                format!("adam.m.{name}"),
                dims.clone(),
                self.adam_decoders.m[i].clone(),
            )?);
            tensors.push(NamedTensor::new(
                format!("adam.v.{name}"),
                dims.clone(),
                self.adam_decoders.v[i].clone(),
            )?);
        }
        for (i, name) in emb_names.iter().enumerate() {
            let dims = vec![self.adam_embeddings.m[i].len() / e, e];
            tensors.push(NamedTensor::new(
                format!("adam.m.{name}"),
                dims.clone(),
                self.adam_embeddings.m[i].clone(),
            )?);
            tensors.push(NamedTensor::new(
                format!("adam.v.{name}"),
                dims,
                self.adam_embeddings.v[i].clone(),
            )?);
        }
        Ok(TensorContainer {
            metadata: serde_json::to_string(&meta)?,
            tensors,
        })
    }

    /// Restores a trainer mid-run. Continuing it matches an uninterrupted
    /// run bit for bit.
    pub fn resume(container: &TensorContainer) -> Result<Self> {
        let model = PriorModel::from_container(container)?;
        let meta = model.meta.clone();
        let mut trainer = Self::assemble(
            meta.arch,
            meta.train.clone(),
            model.params,
            model.embeddings,
        )?;
        let specs: Vec<(String, Vec<usize>)> = trainer
            .params
            .tensors()
            .into_iter()
            .map(|(n, d, _)| (n, d))
            .collect();
        for (i, (name, dims)) in specs.iter().enumerate() {
            tensor_into(
                container,
                &format!("adam.m.{name}"),
                &mut trainer.adam_decoders.m[i],
                dims,
            )?;
            tensor_into(
                container,
                &format!("adam.v.{name}"),
                &mut trainer.adam_decoders.v[i],
                dims,
            )?;
        }
        let e = meta.arch.embed_dim;
        for (i, name) in [EMBEDDINGS_FULL, EMBEDDINGS_CORRUPTION].iter().enumerate() {
            let dims = [trainer.adam_embeddings.m[i].len() / e, e];
            tensor_into(
                container,
                &format!("adam.m.{name}"),
                &mut trainer.adam_embeddings.m[i],
                &dims,
            )?;
            tensor_into(
                container,
                &format!("adam.v.{name}"),
                &mut trainer.adam_embeddings.v[i],
                &dims,
            )?;
        }
        trainer.adam_decoders.step = meta.adam_decoder_step;
        trainer.adam_embeddings.step = meta.adam_embedding_step;
        trainer.iteration = meta.iteration;
        Ok(trainer)
    }

    pub fn into_model(self) -> Result<PriorModel> {
        PriorModel::from_container(&self.checkpoint()?)
    }
}

/// Where `train_prior` writes its artifacts.
pub struct TrainOutput {
    pub dir: PathBuf,
}

impl TrainOutput {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoint.fcpk")
    }

    pub fn model_path(&self) -> PathBuf {
        self.dir.join("model.fcpk")
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }
}

fn write_atomic(container: &TensorContainer, path: &Path) -> Result<()> {
    let tmp = path.with_extension("fcpk.tmp");
    container.write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Trains to completion, checkpointing into `out` when given. A divergence
/// leaves the last checkpoint in place and returns [`Error::Diverged`].
pub fn train_prior(
    trainer: &mut Trainer,
    data: &TrainingData,
    out: Option<&TrainOutput>,
) -> Result<Vec<IterationRecord>> {
    let total = trainer.total_iterations(data.pair_count());
    let mut log = match out {
        Some(o) => {
            fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
            let path = o.log_path();
            let fresh = trainer.iteration() == 0 || !path.exists();
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            if fresh {
                writeln!(file, "{}", IterationRecord::CSV_HEADER)
                    .map_err(|e| Error::io(&path, e))?;
            }
            Some((file, path))
        }
        None => None,
    };
    let (log_every, ckpt_every) = (
        trainer.config.log_every.max(1),
        trainer.config.checkpoint_every,
    );
    let mut hook = |t: &Trainer, r: &IterationRecord| -> Result<()> {
        let done = r.iteration + 1;
        if let Some((file, path)) = log.as_mut() {
            writeln!(file, "{}", r.csv_line()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        if done.is_multiple_of(log_every) || done == total {
            log::info!(
                "iter {done}/{total} epoch {} loss_low {:.3e} loss_full {:.3e}",
                r.epoch,
                r.loss_low,
                r.loss_full
            );
        }
        if let Some(o) = out {
            if ckpt_every > 0 && done.is_multiple_of(ckpt_every) {
                write_atomic(&t.checkpoint()?, &o.checkpoint_path())?;
            }
        }
        Ok(())
    };
    let history = trainer.run_until(data, total, &mut hook)?;
    if let Some(o) = out {
        let container = trainer.checkpoint()?;
        write_atomic(&container, &o.checkpoint_path())?;
        write_atomic(&container, &o.model_path())?;
    }
    Ok(history)
}
