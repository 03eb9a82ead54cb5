//! Parameters of both branches, the embedding table, and the forward /
//! reverse entry points.

use ndarray::{
    concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis, NdFloat,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ArchConfig;
use super::layers::{cast, mapper_backward, mapper_forward, Decoder, Dense};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Standard deviation of freshly drawn embeddings.
pub const EMBEDDING_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Low,
    Full,
}

/// θ_L, θ_F and the two embedding mappers.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub arch: ArchConfig,
    pub mapper_low: Vec<Dense<T>>,
    pub mapper_full: Vec<Dense<T>>,
    pub theta_low: Decoder<T>,
    pub theta_full: Decoder<T>,
}

fn mapper_dims(arch: &ArchConfig, input: usize) -> Vec<(usize, usize)> {
    (0..arch.mapper_layers)
        .map(|i| {
            (
                if i == 0 { input } else { arch.mapper_hidden },
                arch.mapper_hidden,
            )
        })
        .collect()
}

impl<T: NdFloat> DecoderParams<T> {
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let dec = || {
            Decoder::zeros(
                arch.hidden,
                arch.decoder_layers,
                arch.skip_layer,
                arch.mapper_hidden,
            )
        };
        let map = |input| {
            mapper_dims(arch, input)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect()
        };
        Ok(Self {
            arch: *arch,
            mapper_low: map(2 * arch.embed_dim),
            mapper_full: map(arch.embed_dim),
            theta_low: dec(),
            theta_full: dec(),
        })
    }

    /// He-initialized weights, zero biases; a pure function of `seed`.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "decoder-init", 0));
        let mut map = |input| -> Vec<Dense<T>> {
            mapper_dims(arch, input)
                .into_iter()
                .map(|(i, o)| Dense::he(i, o, &mut rng))
                .collect()
        };
        let mapper_low = map(2 * arch.embed_dim);
        let mapper_full = map(arch.embed_dim);
        let mut dec = || {
            Decoder::he(
                arch.hidden,
                arch.decoder_layers,
                arch.skip_layer,
                arch.mapper_hidden,
                &mut rng,
            )
        };
        let theta_low = dec();
        let theta_full = dec();
        Ok(Self {
            arch: *arch,
            mapper_low,
            mapper_full,
            theta_low,
            theta_full,
        })
    }

    fn layers(&self) -> Vec<(String, &Dense<T>)> {
        let groups: [(&str, &[Dense<T>]); 4] = [
            ("mapper_low", &self.mapper_low),
            ("mapper_full", &self.mapper_full),
            ("theta_low", &self.theta_low.layers),
            ("theta_full", &self.theta_full.layers),
        ];
        let mut all = Vec::new();
        for (prefix, layers) in groups {
            for (i, l) in layers.iter().enumerate() {
                all.push((format!("{prefix}.{i}"), l));
            }
        }
        all
    }

    /// Every tensor as `(name, dims, data)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (name, l) in self.layers() {
            out.push((
                format!("{name}.weight"),
                l.weight.shape().to_vec(),
                l.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("{name}.bias"),
                vec![l.bias.len()],
                l.bias.as_slice().expect("contiguous"),
            ));
        }
        out
    }

    /// Mutable views in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in self
            .mapper_low
            .iter_mut()
            .chain(self.mapper_full.iter_mut())
            .chain(self.theta_low.layers.iter_mut())
            .chain(self.theta_full.layers.iter_mut())
        {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("contiguous"));
        }
        out
    }

    /// Only the tensors of one branch (its mapper and decoder), same order.
    pub fn branch_tensors(&self, branch: Branch) -> Vec<(String, Vec<usize>, &[T])> {
        let (m, d) = match branch {
            Branch::Low => ("mapper_low.", "theta_low."),
            Branch::Full => ("mapper_full.", "theta_full."),
        };
        self.tensors()
            .into_iter()
            .filter(|(n, _, _)| n.starts_with(m) || n.starts_with(d))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    pub fn set_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    fn check_inputs(&self, e: &[ArrayView1<T>], q: &ArrayView2<T>) -> Result<()> {
        if q.ncols() != 3 {
            return Err(Error::invalid(format!(
                "queries must be N x 3, got {:?}",
                q.shape()
            )));
        }
        for v in e {
            if v.len() != self.arch.embed_dim {
                return Err(Error::invalid(format!(
                    "embedding has length {}, expected {}",
                    v.len(),
                    self.arch.embed_dim
                )));
            }
        }
        let finite =
            e.iter().all(|v| v.iter().all(|x| x.is_finite())) && q.iter().all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite embedding or query"));
        }
        Ok(())
    }

    fn run(
        &self,
        branch: Branch,
        embedding: Array1<T>,
        q: ArrayView2<T>,
        keep: bool,
    ) -> (Array1<T>, CacheEntry<T>) {
        let (mapper, decoder) = match branch {
            Branch::Low => (&self.mapper_low, &self.theta_low),
            Branch::Full => (&self.mapper_full, &self.theta_full),
        };
        let mapper_acts = mapper_forward(mapper, embedding.view());
        let m = mapper_acts.last().expect("mapper output");
        let (out, hidden) = decoder.forward(q, m.view(), keep);
        let entry = CacheEntry {
            branch,
            mapper_acts,
            queries: if keep {
                q.to_owned()
            } else {
                Array2::zeros((0, 3))
            },
            hidden,
        };
        (out, entry)
    }

    /// `s_L = f_L(q, [e_F, e_C])`.
    pub fn forward_low(
        &self,
        e_full: ArrayView1<T>,
        e_corr: ArrayView1<T>,
        q: ArrayView2<T>,
    ) -> Result<Array1<T>> {
        self.check_inputs(&[e_full, e_corr], &q)?;
        Ok(self.run(Branch::Low, concat(e_full, e_corr), q, false).0)
    }

    /// `s_F = f_F(q, e_F)`.
    pub fn forward_full(&self, e_full: ArrayView1<T>, q: ArrayView2<T>) -> Result<Array1<T>> {
        self.check_inputs(&[e_full], &q)?;
        Ok(self.run(Branch::Full, e_full.to_owned(), q, false).0)
    }

    /// Forward pass that records what [`Self::backward`] needs. `e_corr` is
    /// required for the low branch and ignored for the full one.
    pub fn forward_cached(
        &self,
        branch: Branch,
        e_full: ArrayView1<T>,
        e_corr: Option<ArrayView1<T>>,
        q: ArrayView2<T>,
        cache: &mut ForwardCache<T>,
    ) -> Result<Array1<T>> {
        let embedding = match (branch, e_corr) {
            (Branch::Low, Some(c)) => {
                self.check_inputs(&[e_full, c], &q)?;
                concat(e_full, c)
            }
            (Branch::Low, None) => return Err(Error::invalid("the low branch needs e_C")),
            (Branch::Full, _) => {
                self.check_inputs(&[e_full], &q)?;
                e_full.to_owned()
            }
        };
        let (out, entry) = self.run(branch, embedding, q, true);
        cache.entry = Some(entry);
        Ok(out)
    }

    /// Reverse pass for the most recent cached forward, accumulating into
    /// `grads`. `loss_grads[i]` is dLoss/ds_i. Consumes the cache.
    pub fn backward(
        &self,
        cache: &mut ForwardCache<T>,
        loss_grads: ArrayView1<T>,
        grads: &mut GradientBundle<T>,
    ) -> Result<()> {
        self.backward_inner(cache, loss_grads, grads, true)
    }

    /// Like [`Self::backward`] but only `grads.e_full` and `grads.e_corr` are
    /// meaningful afterwards; the decoder weight products are skipped. For
    /// fitting embeddings against frozen weights.
    pub fn backward_embeddings(
        &self,
        cache: &mut ForwardCache<T>,
        loss_grads: ArrayView1<T>,
        grads: &mut GradientBundle<T>,
    ) -> Result<()> {
        self.backward_inner(cache, loss_grads, grads, false)
    }

    fn backward_inner(
        &self,
        cache: &mut ForwardCache<T>,
        loss_grads: ArrayView1<T>,
        grads: &mut GradientBundle<T>,
        weights: bool,
    ) -> Result<()> {
        let entry = cache
            .entry
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if loss_grads.len() != entry.queries.nrows() {
            return Err(Error::invalid(format!(
                "{} loss gradients for {} queries",
                loss_grads.len(),
                entry.queries.nrows()
            )));
        }
        let (mapper, decoder, g_mapper, g_decoder) = match entry.branch {
            Branch::Low => (
                &self.mapper_low,
                &self.theta_low,
                &mut grads.params.mapper_low,
                &mut grads.params.theta_low,
            ),
            Branch::Full => (
                &self.mapper_full,
                &self.theta_full,
                &mut grads.params.mapper_full,
                &mut grads.params.theta_full,
            ),
        };
        let m = entry.mapper_acts.last().expect("mapper output");
        let dm = decoder.backward(
            g_decoder,
            entry.queries.view(),
            m.view(),
            &entry.hidden,
            loss_grads,
            weights,
        );
        let de = mapper_backward(mapper, g_mapper, &entry.mapper_acts, dm);
        let e = self.arch.embed_dim;
        grads.e_full += &de.slice(s![..e]);
        if entry.branch == Branch::Low {
            grads.e_corr += &de.slice(s![e..]);
        }
        Ok(())
    }
}

fn concat<T: NdFloat>(a: ArrayView1<T>, b: ArrayView1<T>) -> Array1<T> {
    concatenate(Axis(0), &[a, b]).expect("1-d views")
}

struct CacheEntry<T> {
    branch: Branch,
    mapper_acts: Vec<Array1<T>>,
    queries: Array2<T>,
    hidden: Vec<Array2<T>>,
}

/// Activations of one forward pass, consumed by the matching backward.
pub struct ForwardCache<T> {
    entry: Option<CacheEntry<T>>,
}

impl<T> Default for ForwardCache<T> {
    fn default() -> Self {
        Self { entry: None }
    }
}

impl<T> ForwardCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entry.is_none()
    }
}

/// Gradients for every parameter plus the two embeddings of one
/// (shape, observation) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle<T> {
    pub params: DecoderParams<T>,
    pub e_full: Array1<T>,
    pub e_corr: Array1<T>,
}

impl<T: NdFloat> GradientBundle<T> {
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        Ok(Self {
            params: DecoderParams::zeros(arch)?,
            e_full: Array1::zeros(arch.embed_dim),
            e_corr: Array1::zeros(arch.embed_dim),
        })
    }

    pub fn set_zero(&mut self) {
        self.params.set_zero();
        self.e_full.fill(T::zero());
        self.e_corr.fill(T::zero());
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
            && self
                .e_full
                .iter()
                .chain(&self.e_corr)
                .all(|v| v.is_finite())
    }
}

/// Learnable codes: one e_F per shape, shared by all of that shape's
/// observations, and one e_C per (shape, observation).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    shape_ids: Vec<String>,
    /// `shapes x dim`.
    full: Array2<T>,
    /// `pairs x dim`, observations of shape `s` at rows `offsets[s]..offsets[s + 1]`.
    corruption: Array2<T>,
    offsets: Vec<usize>,
}

impl<T: NdFloat> EmbeddingTable<T> {
    /// `layout` lists each shape id with its observation count.
    pub fn zeros(layout: &[(String, usize)], dim: usize) -> Self {
        let mut offsets = vec![0];
        for (_, n) in layout {
            offsets.push(offsets.last().unwrap() + n);
        }
        Self {
            shape_ids: layout.iter().map(|(id, _)| id.clone()).collect(),
            full: Array2::zeros((layout.len(), dim)),
            corruption: Array2::zeros((*offsets.last().unwrap(), dim)),
            offsets,
        }
    }

    /// Entries drawn from N(0, 0.01²).
    pub fn init(layout: &[(String, usize)], dim: usize, seed: u64) -> Self {
        let mut table = Self::zeros(layout, dim);
        let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "embedding-init", 0));
        table.full.mapv_inplace(|_| cast(normal.sample(&mut rng)));
        table
            .corruption
            .mapv_inplace(|_| cast(normal.sample(&mut rng)));
        table
    }

    pub fn from_parts(
        shape_ids: Vec<String>,
        full: Array2<T>,
        corruption: Array2<T>,
        counts: &[usize],
    ) -> Result<Self> {
        let mut offsets = vec![0];
        for n in counts {
            offsets.push(offsets.last().unwrap() + n);
        }
        if shape_ids.len() != counts.len()
            || full.nrows() != shape_ids.len()
            || corruption.nrows() != *offsets.last().unwrap()
            || full.ncols() != corruption.ncols()
        {
            return Err(Error::invalid(
                "embedding table parts disagree on their layout",
            ));
        }
        Ok(Self {
            shape_ids,
            full: full.as_standard_layout().into_owned(),
            corruption: corruption.as_standard_layout().into_owned(),
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.full.ncols()
    }

    pub fn shape_ids(&self) -> &[String] {
        &self.shape_ids
    }

    pub fn shape_index(&self, id: &str) -> Option<usize> {
        self.shape_ids.iter().position(|s| s == id)
    }

    pub fn observation_count(&self, shape: usize) -> usize {
        self.offsets[shape + 1] - self.offsets[shape]
    }

    pub fn observation_counts(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn e_full(&self, shape: usize) -> ArrayView1<'_, T> {
        self.full.row(shape)
    }

    pub fn e_full_mut(&mut self, shape: usize) -> ArrayViewMut1<'_, T> {
        self.full.row_mut(shape)
    }

    pub fn e_corr(&self, shape: usize, observation: usize) -> ArrayView1<'_, T> {
        assert!(
            observation < self.observation_count(shape),
            "observation out of range"
        );
        self.corruption.row(self.offsets[shape] + observation)
    }

    pub fn e_corr_mut(&mut self, shape: usize, observation: usize) -> ArrayViewMut1<'_, T> {
        assert!(
            observation < self.observation_count(shape),
            "observation out of range"
        );
        self.corruption.row_mut(self.offsets[shape] + observation)
    }

    /// `e_L = [e_F, e_C]` for one observation.
    pub fn e_low(&self, shape: usize, observation: usize) -> Array1<T> {
        concat(self.e_full(shape), self.e_corr(shape, observation))
    }

    pub fn full_matrix(&self) -> &Array2<T> {
        &self.full
    }

    pub fn corruption_matrix(&self) -> &Array2<T> {
        &self.corruption
    }

    /// `[full, corruption]` as flat slices, for the optimizer.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.full.as_slice_mut().expect("standard layout"),
            self.corruption.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        vec![
            self.full.as_slice().expect("standard layout"),
            self.corruption.as_slice().expect("standard layout"),
        ]
    }

    /// Adds one pair's embedding gradients into a table-shaped accumulator.
    pub fn accumulate(
        &mut self,
        shape: usize,
        observation: usize,
        g_full: ArrayView1<T>,
        g_corr: ArrayView1<T>,
    ) {
        let mut f = self.e_full_mut(shape);
        f += &g_full;
        let mut c = self.e_corr_mut(shape, observation);
        c += &g_corr;
    }

    pub fn set_zero(&mut self) {
        self.full.fill(T::zero());
        self.corruption.fill(T::zero());
    }
}

/// Decoder parameters and embeddings for `layout`, both deterministic in `seed`.
pub fn init_params<T: NdFloat>(
    arch: &ArchConfig,
    layout: &[(String, usize)],
    seed: u64,
) -> Result<(DecoderParams<T>, EmbeddingTable<T>)> {
    Ok((
        DecoderParams::init(arch, seed)?,
        EmbeddingTable::init(layout, arch.embed_dim, seed),
    ))
}

/// A single code drawn like the training embeddings.
pub fn random_embedding<T: NdFloat>(dim: usize, seed: u64) -> Array1<T> {
    let normal = Normal::new(0.0, EMBEDDING_INIT_STD).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_simple_fn(dim, || cast(normal.sample(&mut rng)))
}
