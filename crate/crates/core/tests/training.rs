use std::sync::OnceLock;

use fcp_core::dataset::corpus::{toy_shape, ToyKind};
use fcp_core::dataset::{
    build_query_batches, build_training_shape, GenerationConfig, TrainingShape,
};
use fcp_core::error::Error;
use fcp_core::geometry::QueryBatch;
use fcp_core::neural::{ArchConfig, Branch};
use fcp_core::training::{
    train_prior, PriorModel, TrainConfig, TrainOutput, Trainer, TrainingData,
};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        embed_dim: 16,
        mapper_hidden: 32,
        mapper_layers: 2,
        hidden: 64,
        decoder_layers: 4,
        skip_layer: 2,
    }
}

/// Two toy shapes with two observations each, built once.
fn shapes() -> &'static Vec<(TrainingShape, Vec<QueryBatch>)> {
    static SHAPES: OnceLock<Vec<(TrainingShape, Vec<QueryBatch>)>> = OnceLock::new();
    SHAPES.get_or_init(|| {
        let cfg = GenerationConfig {
            resolution: 64,
            cloud_points: 10_000,
            queries_per_observation: 1024,
            reject_samples: 2000,
            seed: 5,
            ..GenerationConfig::default()
        };
        [ToyKind::Box, ToyKind::Cylinder]
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let mesh = toy_shape(kind, i as u64).unwrap();
                let shape = build_training_shape(kind.name(), "toy", &mesh, &cfg).unwrap();
                let batches = build_query_batches(&shape, 1024, 99).unwrap();
                (shape, batches)
            })
            .collect()
    })
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        queries_per_iter: 512,
        train_observations: 2,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn pairs_are_visited_round_robin_shape_major() {
    let data = TrainingData::from_shapes(shapes(), &config()).unwrap();
    assert_eq!(data.pair_count(), 4);
    let order: Vec<(usize, usize)> = (0..4).map(|p| data.pair(p)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    let batch = data.batch(1, 512, 7).unwrap();
    assert_eq!(batch.queries.nrows(), 512);
}

#[test]
fn learning_rates_step_with_epochs() {
    let cfg = TrainConfig {
        lr_decay_every: 2,
        max_iterations: Some(20),
        ..config()
    };
    let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
    let mut trainer = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
    let history = train_prior(&mut trainer, &data, None).unwrap();
    assert_eq!(history.len(), 20);
    for r in &history {
        assert_eq!(r.epoch, r.iteration / 4);
        let factor = 0.5f64.powi((r.epoch / 2) as i32);
        assert_eq!(r.lr_decoders, 0.001 * factor);
        assert_eq!(r.lr_embeddings, 0.0005 * factor);
    }
}

#[test]
fn training_overfits_a_small_set() {
    let cfg = TrainConfig {
        epochs: 150,
        lr_embeddings: 0.001,
        ..config()
    };
    let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
    let mut trainer = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
    let history = train_prior(&mut trainer, &data, None).unwrap();
    let head: f64 = history[..4].iter().map(|r| r.loss()).sum();
    let tail: f64 = history[history.len() - 4..].iter().map(|r| r.loss()).sum();
    assert!(tail < 0.1 * head, "loss {head:.4e} -> {tail:.4e}");
}

#[test]
fn frozen_corruption_codes_do_not_move() {
    let cfg = TrainConfig {
        freeze_corruption: true,
        max_iterations: Some(12),
        ..config()
    };
    let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
    let mut trainer = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
    let before = trainer.embeddings.clone();
    train_prior(&mut trainer, &data, None).unwrap();
    assert_eq!(
        before.corruption_matrix(),
        trainer.embeddings.corruption_matrix()
    );
    assert_ne!(before.full_matrix(), trainer.embeddings.full_matrix());
}

#[test]
fn resuming_from_a_checkpoint_is_bit_exact() {
    for online in [false, true] {
        let cfg = TrainConfig {
            max_iterations: Some(10),
            online_queries: online,
            ..config()
        };
        let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
        let mut straight = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
        train_prior(&mut straight, &data, None).unwrap();

        let mut first = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
        let mut hook = |_: &Trainer, _: &_| Ok(());
        first.run_until(&data, 6, &mut hook).unwrap();
        let bytes = first.checkpoint().unwrap().to_bytes();
        drop(first);
        let container =
            fcp_core::neural::TensorContainer::from_bytes(&bytes, std::path::Path::new("mem"))
                .unwrap();
        let mut resumed = Trainer::resume(&container).unwrap();
        assert_eq!(resumed.iteration(), 6);
        train_prior(&mut resumed, &data, None).unwrap();
        assert_eq!(
            straight.checkpoint().unwrap().to_bytes(),
            resumed.checkpoint().unwrap().to_bytes(),
            "online = {online}"
        );
    }
}

#[test]
fn outputs_log_and_model_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        max_iterations: Some(8),
        checkpoint_every: 4,
        ..config()
    };
    let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
    let mut trainer = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
    let out = TrainOutput {
        dir: dir.path().to_path_buf(),
    };
    train_prior(&mut trainer, &data, Some(&out)).unwrap();
    let log = std::fs::read_to_string(out.log_path()).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "iter,epoch,loss_low,loss_full,lr_emb,lr_dec");
    assert_eq!(lines.len(), 9);
    let model = PriorModel::load(&out.model_path()).unwrap();
    assert_eq!(model.meta.iteration, 8);
    assert_eq!(model.params, trainer.params);
    assert_eq!(model.embeddings, trainer.embeddings);
    assert_ne!(
        model.branch_hash(Branch::Low),
        model.branch_hash(Branch::Full)
    );
}

#[test]
fn divergence_keeps_the_last_good_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        lr_decoders: 1e30,
        lr_embeddings: 1e30,
        checkpoint_every: 1,
        max_iterations: Some(50),
        ..config()
    };
    let data = TrainingData::from_shapes(shapes(), &cfg).unwrap();
    let mut trainer = Trainer::new(&tiny_arch(), &cfg, data.layout()).unwrap();
    let out = TrainOutput {
        dir: dir.path().to_path_buf(),
    };
    match train_prior(&mut trainer, &data, Some(&out)) {
        Err(Error::Diverged { iteration, .. }) => {
            if iteration > 0 {
                let model = PriorModel::load(&out.checkpoint_path()).unwrap();
                assert_eq!(model.meta.iteration, iteration);
                assert!(model.params.is_finite());
            }
        }
        other => panic!("expected divergence, got {:?}", other.map(|h| h.len())),
    }
}
