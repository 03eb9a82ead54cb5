use fcp_core::neural::{
    init_params, ArchConfig, Branch, DecoderParams, EmbeddingTable, ForwardCache, GradientBundle,
};
use fcp_core::Error;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_arch() -> ArchConfig {
    ArchConfig {
        embed_dim: 128,
        mapper_hidden: 128,
        mapper_layers: 3,
        hidden: 32,
        decoder_layers: 4,
        skip_layer: 2,
    }
}

fn queries(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, 3), || rng.random_range(-1.0..1.0))
}

fn layout() -> Vec<(String, usize)> {
    vec![("a".into(), 2), ("b".into(), 3)]
}

/// Independent reference: explicit loops over plain vectors.
fn reference_forward(
    params: &DecoderParams<f64>,
    branch: Branch,
    embedding: &[f64],
    q: &[f64; 3],
) -> f64 {
    let (mapper, decoder) = match branch {
        Branch::Low => (&params.mapper_low, &params.theta_low),
        Branch::Full => (&params.mapper_full, &params.theta_full),
    };
    let affine = |w: &Array2<f64>, b: &Array1<f64>, x: &[f64]| -> Vec<f64> {
        (0..w.nrows())
            .map(|i| b[i] + (0..w.ncols()).map(|j| w[[i, j]] * x[j]).sum::<f64>())
            .collect()
    };
    let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    let mut m = embedding.to_vec();
    for l in mapper {
        m = relu(affine(&l.weight, &l.bias, &m));
    }
    let x0: Vec<f64> = q.iter().copied().chain(m.iter().copied()).collect();
    let mut h = x0.clone();
    let last = decoder.layers.len() - 1;
    for (i, l) in decoder.layers.iter().enumerate() {
        let input: Vec<f64> = if i == decoder.skip {
            h.iter().copied().chain(x0.iter().copied()).collect()
        } else {
            h.clone()
        };
        let z = affine(&l.weight, &l.bias, &input);
        if i == last {
            return z[0];
        }
        h = relu(z);
    }
    unreachable!()
}

#[test]
fn forward_matches_the_loop_reference() {
    let arch = ArchConfig::default();
    let (params, table) = init_params::<f64>(&arch, &layout(), 3).unwrap();
    let q = queries(5, 1);
    let low = params
        .forward_low(table.e_full(1), table.e_corr(1, 2), q.view())
        .unwrap();
    let full = params.forward_full(table.e_full(1), q.view()).unwrap();
    let e_low = table.e_low(1, 2).to_vec();
    let e_full = table.e_full(1).to_vec();
    for i in 0..5 {
        let qi = [q[[i, 0]], q[[i, 1]], q[[i, 2]]];
        let rl = reference_forward(&params, Branch::Low, &e_low, &qi);
        let rf = reference_forward(&params, Branch::Full, &e_full, &qi);
        assert!((low[i] - rl).abs() < 1e-6, "{} vs {rl}", low[i]);
        assert!((full[i] - rf).abs() < 1e-6, "{} vs {rf}", full[i]);
    }
}

#[test]
fn zero_weights_collapse_to_the_final_bias() {
    let arch = small_arch();
    let mut params = DecoderParams::<f64>::zeros(&arch).unwrap();
    params.theta_full.layers.last_mut().unwrap().bias[0] = 0.37;
    params.theta_low.layers.last_mut().unwrap().bias[0] = -1.5;
    let e = Array1::from_elem(128, 0.3);
    let q = queries(9, 2);
    assert!(params
        .forward_full(e.view(), q.view())
        .unwrap()
        .iter()
        .all(|&v| v == 0.37));
    assert!(params
        .forward_low(e.view(), e.view(), q.view())
        .unwrap()
        .iter()
        .all(|&v| v == -1.5));
}

#[test]
fn permuting_queries_permutes_outputs() {
    let (params, table) = init_params::<f32>(&small_arch(), &layout(), 4).unwrap();
    let q = queries(6, 3).mapv(|v| v as f32);
    let perm = [4, 0, 5, 2, 1, 3];
    let qp = Array2::from_shape_fn((6, 3), |(i, j)| q[[perm[i], j]]);
    let a = params
        .forward_low(table.e_full(0), table.e_corr(0, 1), q.view())
        .unwrap();
    let b = params
        .forward_low(table.e_full(0), table.e_corr(0, 1), qp.view())
        .unwrap();
    for i in 0..6 {
        assert_eq!(b[i], a[perm[i]]);
    }
}

#[test]
fn nan_inputs_are_rejected() {
    let (params, table) = init_params::<f32>(&small_arch(), &layout(), 4).unwrap();
    let mut q = Array2::<f32>::zeros((2, 3));
    q[[1, 2]] = f32::NAN;
    assert!(matches!(
        params.forward_full(table.e_full(0), q.view()),
        Err(Error::InvalidInput(_))
    ));
}

/// Summed squared-error loss over both branches for one pair.
fn loss(
    params: &DecoderParams<f64>,
    e_f: &Array1<f64>,
    e_c: &Array1<f64>,
    q: &Array2<f64>,
    gt: &[Array1<f64>; 2],
) -> f64 {
    let sl = params
        .forward_low(e_f.view(), e_c.view(), q.view())
        .unwrap();
    let sf = params.forward_full(e_f.view(), q.view()).unwrap();
    let n = q.nrows() as f64;
    ((&sl - &gt[0]).mapv(|d| d * d).sum() + (&sf - &gt[1]).mapv(|d| d * d).sum()) / n
}

fn analytic(
    params: &DecoderParams<f64>,
    e_f: &Array1<f64>,
    e_c: &Array1<f64>,
    q: &Array2<f64>,
    gt: &[Array1<f64>; 2],
) -> GradientBundle<f64> {
    let mut grads = GradientBundle::zeros(&params.arch).unwrap();
    let mut cache = ForwardCache::new();
    let n = q.nrows() as f64;
    let sl = params
        .forward_cached(
            Branch::Low,
            e_f.view(),
            Some(e_c.view()),
            q.view(),
            &mut cache,
        )
        .unwrap();
    params
        .backward(&mut cache, ((&sl - &gt[0]) * (2.0 / n)).view(), &mut grads)
        .unwrap();
    let sf = params
        .forward_cached(Branch::Full, e_f.view(), None, q.view(), &mut cache)
        .unwrap();
    params
        .backward(&mut cache, ((&sf - &gt[1]) * (2.0 / n)).view(), &mut grads)
        .unwrap();
    grads
}

#[test]
fn gradients_match_central_differences() {
    let arch = small_arch();
    let (params, table) = init_params::<f64>(&arch, &layout(), 12).unwrap();
    let q = queries(8, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gt = [
        Array1::from_shape_simple_fn(8, || rng.random_range(-0.5..0.5)),
        Array1::from_shape_simple_fn(8, || rng.random_range(-0.5..0.5)),
    ];
    // Larger codes than the 0.01 init keep the mapper units well away from
    // their kinks.
    let e_f = table.e_full(0).mapv(|v| v * 50.0);
    let e_c = table.e_corr(0, 1).mapv(|v| v * 50.0);
    let grads = analytic(&params, &e_f, &e_c, &q, &gt);
    let h = 1e-4;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-7);

    let names: Vec<String> = params.tensors().iter().map(|t| t.0.clone()).collect();
    let g_tensors: Vec<Vec<f64>> = grads
        .params
        .tensors()
        .iter()
        .map(|t| t.2.to_vec())
        .collect();
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for (ti, name) in names.iter().enumerate() {
        let len = g_tensors[ti].len();
        for j in 0..len {
            let orig = p.tensors_mut()[ti][j];
            p.tensors_mut()[ti][j] = orig + h;
            let up = loss(&p, &e_f, &e_c, &q, &gt);
            p.tensors_mut()[ti][j] = orig - h;
            let down = loss(&p, &e_f, &e_c, &q, &gt);
            p.tensors_mut()[ti][j] = orig;
            let fd = (up - down) / (2.0 * h);
            let r = rel(g_tensors[ti][j], fd);
            assert!(
                r < 1e-4,
                "{name}[{j}]: analytic {} vs fd {fd}",
                g_tensors[ti][j]
            );
            worst = worst.max(r);
        }
    }
    for (which, base, g) in [("e_F", &e_f, &grads.e_full), ("e_C", &e_c, &grads.e_corr)] {
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += h;
            let mut minus = base.clone();
            minus[j] -= h;
            let (up, down) = if which == "e_F" {
                (
                    loss(&params, &plus, &e_c, &q, &gt),
                    loss(&params, &minus, &e_c, &q, &gt),
                )
            } else {
                (
                    loss(&params, &e_f, &plus, &q, &gt),
                    loss(&params, &e_f, &minus, &q, &gt),
                )
            };
            let fd = (up - down) / (2.0 * h);
            assert!(rel(g[j], fd) < 1e-4, "{which}[{j}]: {} vs {fd}", g[j]);
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let (params, table) = init_params::<f64>(&small_arch(), &layout(), 1).unwrap();
    let q = queries(4, 1);
    let mut grads = GradientBundle::zeros(&params.arch).unwrap();
    let mut cache = ForwardCache::new();
    params
        .forward_cached(
            Branch::Low,
            table.e_full(0),
            Some(table.e_corr(0, 0)),
            q.view(),
            &mut cache,
        )
        .unwrap();
    params
        .backward(&mut cache, Array1::zeros(4).view(), &mut grads)
        .unwrap();
    assert_eq!(grads, GradientBundle::zeros(&params.arch).unwrap());
}

#[test]
fn batch_gradient_is_the_sum_of_per_query_gradients() {
    let (params, table) = init_params::<f64>(&small_arch(), &layout(), 2).unwrap();
    let q = queries(5, 7);
    let g = Array1::from(vec![0.3, -1.0, 0.5, 2.0, -0.25]);
    let mut cache = ForwardCache::new();
    let mut whole = GradientBundle::zeros(&params.arch).unwrap();
    params
        .forward_cached(Branch::Full, table.e_full(1), None, q.view(), &mut cache)
        .unwrap();
    params.backward(&mut cache, g.view(), &mut whole).unwrap();
    let mut parts = GradientBundle::zeros(&params.arch).unwrap();
    for i in 0..5 {
        let qi = q.slice(ndarray::s![i..i + 1, ..]);
        params
            .forward_cached(Branch::Full, table.e_full(1), None, qi, &mut cache)
            .unwrap();
        params
            .backward(&mut cache, g.slice(ndarray::s![i..i + 1]), &mut parts)
            .unwrap();
    }
    for (a, b) in whole.e_full.iter().zip(&parts.e_full) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
    assert!(whole.e_corr.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_needs_a_fresh_forward() {
    let (params, table) = init_params::<f32>(&small_arch(), &layout(), 1).unwrap();
    let mut grads = GradientBundle::zeros(&params.arch).unwrap();
    let mut cache = ForwardCache::new();
    let g = Array1::<f32>::zeros(2);
    assert!(matches!(
        params.backward(&mut cache, g.view(), &mut grads),
        Err(Error::State(_))
    ));
    let q = Array2::<f32>::zeros((2, 3));
    params
        .forward_cached(Branch::Full, table.e_full(0), None, q.view(), &mut cache)
        .unwrap();
    params.backward(&mut cache, g.view(), &mut grads).unwrap();
    assert!(matches!(
        params.backward(&mut cache, g.view(), &mut grads),
        Err(Error::State(_))
    ));
}

#[test]
fn initialization_is_seeded_and_sized() {
    let arch = ArchConfig::desk();
    let (a, ta) = init_params::<f32>(&arch, &layout(), 9).unwrap();
    let (b, tb) = init_params::<f32>(&arch, &layout(), 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let (c, _) = init_params::<f32>(&arch, &layout(), 10).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.theta_low.layers.len(), 8);
    for (i, l) in a.theta_full.layers.iter().enumerate() {
        let expected_out = if i == 7 { 1 } else { 256 };
        let expected_in = match i {
            0 => 131,
            4 => 256 + 131,
            _ => 256,
        };
        assert_eq!(
            (l.output_dim(), l.input_dim()),
            (expected_out, expected_in),
            "layer {i}"
        );
    }
    assert_eq!(a.mapper_low[0].input_dim(), 256);
    assert_eq!(a.mapper_full[0].input_dim(), 128);
    assert!(a.mapper_low.iter().all(|l| l.output_dim() == 128));
}

#[test]
fn embedding_spread_matches_the_init_std() {
    let layout: Vec<(String, usize)> = (0..40).map(|i| (format!("s{i}"), 1)).collect();
    let table = EmbeddingTable::<f64>::init(&layout, 128, 3);
    let values: Vec<f64> = table
        .full_matrix()
        .iter()
        .chain(table.corruption_matrix().iter())
        .copied()
        .collect();
    assert!(values.len() >= 10_000);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - 0.01).abs() < 0.001, "{std}");
}

#[test]
fn observations_share_one_identity_code() {
    let mut table = EmbeddingTable::<f32>::init(&layout(), 8, 1);
    let before = [table.e_low(1, 0), table.e_low(1, 2)];
    table.e_full_mut(1)[3] += 1.0;
    let after = [table.e_low(1, 0), table.e_low(1, 2)];
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(a[3], b[3] + 1.0);
        assert_eq!(a.slice(ndarray::s![8..]), b.slice(ndarray::s![8..]));
    }
}

#[test]
fn full_branch_ignores_corruption_codes() {
    let (params, mut table) = init_params::<f32>(&small_arch(), &layout(), 5).unwrap();
    let q = queries(16, 2).mapv(|v| v as f32);
    let a = params.forward_full(table.e_full(0), q.view()).unwrap();
    table.e_corr_mut(0, 0).mapv_inplace(|v| v * -3.0 + 1.0);
    let b = params.forward_full(table.e_full(0), q.view()).unwrap();
    let c = params.forward_full(table.e_full(0), q.view()).unwrap();
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(b, c);
}

#[test]
fn embedding_only_backward_matches_full_backward() {
    let (params, table) = init_params::<f64>(&small_arch(), &layout(), 4).unwrap();
    let q = queries(6, 9);
    let g = Array1::from(vec![0.1, -0.4, 0.9, 0.3, -1.2, 0.05]);
    let mut cache = ForwardCache::new();
    let mut full = GradientBundle::zeros(&params.arch).unwrap();
    let mut lean = GradientBundle::zeros(&params.arch).unwrap();
    let (ef, ec) = (table.e_full(0), table.e_corr(0, 1));
    params
        .forward_cached(Branch::Low, ef, Some(ec), q.view(), &mut cache)
        .unwrap();
    params.backward(&mut cache, g.view(), &mut full).unwrap();
    params
        .forward_cached(Branch::Low, ef, Some(ec), q.view(), &mut cache)
        .unwrap();
    params
        .backward_embeddings(&mut cache, g.view(), &mut lean)
        .unwrap();
    assert_eq!(full.e_full, lean.e_full);
    assert_eq!(full.e_corr, lean.e_corr);
}
