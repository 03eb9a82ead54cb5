//! Dense layers, the embedding mapper and the skip-connected decoder, with
//! hand-derived reverse passes.
//!
//! The mapped embedding `m` is the same for every query in a batch, so its
//! contribution to a layer is folded into the bias once per call and its
//! gradient is the batch sum of the pre-activation gradients.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, NdFloat, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out x in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

pub(crate) fn cast<T: NdFloat>(v: f64) -> T {
    T::from(v).expect("representable")
}

impl<T: NdFloat> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// He-normal weights, zero biases.
    pub fn he(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || {
            cast(std * rng.sample::<f64, _>(StandardNormal))
        });
        Self {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

fn relu<T: NdFloat>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Zeroes `grad` wherever the ReLU output `act` was clamped.
fn mask_relu<'a, T: NdFloat, D: ndarray::Dimension>(
    grad: &mut ndarray::ArrayViewMut<'a, T, D>,
    act: ndarray::ArrayView<'_, T, D>,
) {
    Zip::from(grad).and(act).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}

/// Embedding mapper: ReLU after every layer.
pub fn mapper_forward<T: NdFloat>(layers: &[Dense<T>], input: ArrayView1<T>) -> Vec<Array1<T>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input.to_owned());
    for layer in layers {
        let z = layer.weight.dot(acts.last().expect("input pushed")) + &layer.bias;
        acts.push(z.mapv(relu));
    }
    acts
}

/// Accumulates mapper gradients given `d_out`; returns the input gradient.
pub fn mapper_backward<T: NdFloat>(
    layers: &[Dense<T>],
    grads: &mut [Dense<T>],
    acts: &[Array1<T>],
    d_out: Array1<T>,
) -> Array1<T> {
    let mut d = d_out;
    for i in (0..layers.len()).rev() {
        mask_relu(&mut d.view_mut(), acts[i + 1].view());
        let col = d.view().insert_axis(Axis(1));
        let row = acts[i].view().insert_axis(Axis(0));
        general_mat_mul(T::one(), &col, &row, T::one(), &mut grads[i].weight);
        grads[i].bias += &d;
        d = layers[i].weight.t().dot(&d);
    }
    d
}

/// Column blocks of one decoder layer's input.
struct Columns {
    hidden: Range<usize>,
    query: Range<usize>,
    mapped: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub layers: Vec<Dense<T>>,
    pub skip: usize,
}

impl<T: NdFloat> Decoder<T> {
    /// Layer `i` maps `in_i -> out_i`; layer 0 reads `[q, m]`, the skip layer
    /// reads `[h, q, m]`, the last layer outputs one value.
    pub fn dims(hidden: usize, layers: usize, skip: usize, mapped: usize) -> Vec<(usize, usize)> {
        (0..layers)
            .map(|i| {
                let input = match i {
                    0 => 3 + mapped,
                    i if i == skip => hidden + 3 + mapped,
                    _ => hidden,
                };
                let output = if i + 1 == layers { 1 } else { hidden };
                (input, output)
            })
            .collect()
    }

    pub fn zeros(hidden: usize, layers: usize, skip: usize, mapped: usize) -> Self {
        Self {
            layers: Self::dims(hidden, layers, skip, mapped)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
            skip,
        }
    }

    pub fn he(
        hidden: usize,
        layers: usize,
        skip: usize,
        mapped: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            layers: Self::dims(hidden, layers, skip, mapped)
                .into_iter()
                .map(|(i, o)| Dense::he(i, o, rng))
                .collect(),
            skip,
        }
    }

    fn columns(&self, l: usize) -> Columns {
        let width = self.layers[l].input_dim();
        let extra = if l == 0 || l == self.skip {
            3 + self.mapped_dim()
        } else {
            0
        };
        let h = width - extra;
        let q = if extra > 0 { h..h + 3 } else { h..h };
        Columns {
            hidden: 0..h,
            query: q.clone(),
            mapped: q.end..width,
        }
    }

    pub fn mapped_dim(&self) -> usize {
        self.layers[0].input_dim() - 3
    }

    /// Batched evaluation. With `keep` set, every hidden activation is
    /// returned for the reverse pass; otherwise only the output is kept.
    pub fn forward(
        &self,
        q: ArrayView2<T>,
        m: ArrayView1<T>,
        keep: bool,
    ) -> (Array1<T>, Vec<Array2<T>>) {
        let b = q.nrows();
        let last = self.layers.len() - 1;
        let mut hidden: Vec<Array2<T>> = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let cols = self.columns(l);
            let w = &layer.weight;
            let mut bias = layer.bias.clone();
            if !cols.mapped.is_empty() {
                bias += &w.slice(s![.., cols.mapped.clone()]).dot(&m);
            }
            let mut z = Array2::from_shape_fn((b, layer.output_dim()), |(_, j)| bias[j]);
            if let Some(h) = hidden.last() {
                general_mat_mul(
                    T::one(),
                    h,
                    &w.slice(s![.., cols.hidden.clone()]).t(),
                    T::one(),
                    &mut z,
                );
            }
            if !cols.query.is_empty() {
                general_mat_mul(
                    T::one(),
                    &q,
                    &w.slice(s![.., cols.query.clone()]).t(),
                    T::one(),
                    &mut z,
                );
            }
            if l == last {
                return (z.column(0).to_owned(), hidden);
            }
            z.mapv_inplace(relu);
            if !keep {
                hidden.clear();
            }
            hidden.push(z);
        }
        unreachable!("decoder has an output layer")
    }

    /// Accumulates parameter gradients into `grads` given the per-query
    /// output gradient `g`; returns the gradient with respect to `m`.
    /// With `weights` false the per-query weight products are skipped and
    /// only biases and the `m` columns are accumulated.
    pub fn backward(
        &self,
        grads: &mut Decoder<T>,
        q: ArrayView2<T>,
        m: ArrayView1<T>,
        hidden: &[Array2<T>],
        g: ArrayView1<T>,
        weights: bool,
    ) -> Array1<T> {
        let mut dm = Array1::zeros(m.len());
        let mut dz: Array2<T> = g.insert_axis(Axis(1)).to_owned();
        for l in (0..self.layers.len()).rev() {
            let cols = self.columns(l);
            let w = &self.layers[l].weight;
            let gl = &mut grads.layers[l];
            let dsum = dz.sum_axis(Axis(0));
            gl.bias += &dsum;
            if weights && l > 0 {
                let mut gw = gl.weight.slice_mut(s![.., cols.hidden.clone()]);
                general_mat_mul(T::one(), &dz.t(), &hidden[l - 1], T::one(), &mut gw);
            }
            if weights && !cols.query.is_empty() {
                let mut gw = gl.weight.slice_mut(s![.., cols.query.clone()]);
                general_mat_mul(T::one(), &dz.t(), &q, T::one(), &mut gw);
            }
            if !cols.mapped.is_empty() {
                let mut gw = gl.weight.slice_mut(s![.., cols.mapped.clone()]);
                let col = dsum.view().insert_axis(Axis(1));
                general_mat_mul(T::one(), &col, &m.insert_axis(Axis(0)), T::one(), &mut gw);
                dm += &w.slice(s![.., cols.mapped.clone()]).t().dot(&dsum);
            }
            if l > 0 {
                let mut dh = dz.dot(&w.slice(s![.., cols.hidden.clone()]));
                mask_relu(&mut dh.view_mut(), hidden[l - 1].view());
                dz = dh;
            }
        }
        dm
    }
}
