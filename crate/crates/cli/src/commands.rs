use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use fcp_core::consolidation::{
    consolidate as run_consolidation, sharpen, EmbeddingInit, ObservationData,
};
use fcp_core::dataset::corpus::toy_corpus;
use fcp_core::dataset::{build_dataset, read_dataset, SourceShape};
use fcp_core::error::Error;
use fcp_core::evaluation::benchmark;
use fcp_core::geometry::io::{parse_ply, read_mesh, read_point_cloud, write_atomic, write_mesh};
use fcp_core::geometry::{
    normalize_mesh, sample_surface, NormalizationTransform, OrientedPointCloud, TriangleMesh,
};
use fcp_core::neural::TensorContainer;
use fcp_core::seed::derive_seed;
use fcp_core::spectral::{read_grid, write_grid, FrequencyCutoff, SpectralReconstruction};
use fcp_core::training::{train_prior, PriorModel, TrainOutput, Trainer, TrainingData};
use log::info;
use ndarray::Array1;

use crate::config::{write_snapshot, RunConfig};

const SNAPSHOT_NAME: &str = "config.resolved.toml";

/// `<path>` with its extension replaced by `config.toml`.
fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("config.toml")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of .ply/.obj source meshes; ids are file stems.
    #[arg(long, conflicts_with = "toy")]
    pub shapes: Option<PathBuf>,
    /// Use a procedural corpus of this many primitives instead.
    #[arg(long)]
    pub toy: Option<usize>,
    /// Poisson lattice resolution.
    #[arg(long)]
    pub res: Option<usize>,
    /// Oriented points sampled per shape.
    #[arg(long)]
    pub points: Option<usize>,
    /// Extra observations with random cutoffs beyond the six subbands.
    #[arg(long)]
    pub extra: Option<usize>,
    /// Stored queries per observation.
    #[arg(long)]
    pub queries: Option<usize>,
}

fn source_meshes(dir: &Path) -> Result<Vec<SourceShape>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_ascii_lowercase)
                    .as_deref(),
                Some("ply" | "obj")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(Error::InvalidInput(format!(
            "no .ply or .obj meshes in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            Ok(SourceShape {
                id: p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                source: p
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                mesh: read_mesh(p)?,
            })
        })
        .collect()
}

pub fn build_data(args: &BuildDataArgs, mut cfg: RunConfig) -> Result<()> {
    let g = &mut cfg.generation;
    if let Some(v) = args.res {
        g.resolution = v;
    }
    if let Some(v) = args.points {
        g.cloud_points = v;
    }
    if let Some(v) = args.extra {
        g.extra_observations = v;
    }
    if let Some(v) = args.queries {
        g.queries_per_observation = v;
    }
    let sources = match &args.shapes {
        Some(dir) => source_meshes(dir)?,
        None => toy_corpus(args.toy.unwrap_or(10), cfg.generation.seed)?
            .into_iter()
            .map(|(id, mesh)| SourceShape {
                source: format!("toy:{id}"),
                id,
                mesh,
            })
            .collect(),
    };
    create_dir(&args.out)?;
    let manifest = build_dataset(&sources, &cfg.generation, &args.out)?;
    write_snapshot(&args.out.join(SNAPSHOT_NAME), "build-data", &cfg)?;
    println!(
        "built {} shapes ({} rejected) into {}",
        manifest.shapes.len(),
        manifest.rejected.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by build-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for the model, checkpoint and log.
    #[arg(long)]
    pub out: PathBuf,
    /// Passes over every (shape, observation) pair.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Stop after this many iterations.
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Queries per iteration.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Decoder hidden width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Iterations between checkpoints.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Sample fresh queries each iteration instead of using stored batches.
    #[arg(long)]
    pub online: bool,
    /// Continue from a checkpoint. Its configuration is kept except for
    /// --epochs and --max-iters.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub fn train(args: &TrainArgs, mut cfg: RunConfig) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.max_iters {
        t.max_iterations = Some(v);
    }
    if let Some(v) = args.queries {
        t.queries_per_iter = v;
    }
    if let Some(v) = args.checkpoint_every {
        t.checkpoint_every = v;
    }
    t.online_queries |= args.online;
    if let Some(v) = args.hidden {
        cfg.arch.hidden = v;
    }
    let resumed = match &args.resume {
        Some(path) => {
            let mut trainer = Trainer::resume(&TensorContainer::read(path)?)?;
            info!("resuming at iteration {}", trainer.iteration());
            // Only the run length may change on resume.
            if let Some(v) = args.epochs {
                trainer.config.epochs = v;
            }
            if let Some(v) = args.max_iters {
                trainer.config.max_iterations = Some(v);
            }
            cfg.arch = trainer.arch;
            cfg.train = trainer.config.clone();
            Some(trainer)
        }
        None => None,
    };
    let dataset = read_dataset(&args.data)?;
    let data = TrainingData::from_dataset(&dataset, &cfg.train)?;
    let mut trainer = match resumed {
        Some(t) => t,
        None => Trainer::new(&cfg.arch, &cfg.train, data.layout())?,
    };
    create_dir(&args.out)?;
    write_snapshot(&args.out.join(SNAPSHOT_NAME), "train", &cfg)?;
    let out = TrainOutput {
        dir: args.out.clone(),
    };
    let history = train_prior(&mut trainer, &data, Some(&out))?;
    match history.last() {
        Some(r) => println!(
            "trained {} iterations; final loss_low {:.4e} loss_full {:.4e}; model at {}",
            trainer.iteration(),
            r.loss_low,
            r.loss_full,
            out.model_path().display()
        ),
        None => println!(
            "nothing to do: already at iteration {}",
            trainer.iteration()
        ),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputKind {
    Auto,
    Mesh,
    Grid,
    Points,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitMode {
    Random,
    Mean,
}

#[derive(Debug, Args)]
pub struct ConsolidateArgs {
    /// Trained model or checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Observation: mesh (.ply/.obj), SDF grid (.fcpg) or oriented points (.ply without faces).
    #[arg(long)]
    pub input: PathBuf,
    /// Output mesh path.
    #[arg(long)]
    pub out: PathBuf,
    /// Input representation; inferred from the file when auto.
    #[arg(long, value_enum, default_value = "auto")]
    pub kind: InputKind,
    /// Fitting iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Fitting learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Queries per fitting iteration.
    #[arg(long)]
    pub queries: Option<usize>,
    /// Extraction lattice resolution.
    #[arg(long, default_value_t = 256)]
    pub res: usize,
    /// Embedding initialization.
    #[arg(long, value_enum)]
    pub init: Option<InitMode>,
    /// Treat the input as already normalized into the model frame.
    #[arg(long)]
    pub no_normalize: bool,
    /// Write a JSON report (loss history, timings) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn read_observation(path: &Path, kind: InputKind) -> Result<ObservationData> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let ingest = |e: Error| match e {
        Error::Io { .. } => e,
        other => Error::Ingest(other.to_string()),
    };
    Ok(match (kind, ext.as_str()) {
        (InputKind::Grid, _) | (InputKind::Auto, "fcpg") => {
            ObservationData::Grid(read_grid(path).map_err(ingest)?)
        }
        (InputKind::Points, _) => ObservationData::Points(read_point_cloud(path).map_err(ingest)?),
        (InputKind::Mesh, _) | (InputKind::Auto, "obj") => {
            ObservationData::Mesh(read_mesh(path).map_err(ingest)?)
        }
        (InputKind::Auto, "ply") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let ply = parse_ply(&bytes).map_err(ingest)?;
            if !ply.faces.is_empty() {
                ObservationData::Mesh(
                    TriangleMesh::new(ply.vertices, ply.faces)
                        .map_err(ingest)?
                        .cleaned(),
                )
            } else if let Some(normals) = ply.normals {
                ObservationData::Points(
                    OrientedPointCloud::with_unnormalized(ply.vertices, normals).map_err(ingest)?,
                )
            } else {
                bail!(Error::Ingest(format!(
                    "{} has neither faces nor normals",
                    path.display()
                )))
            }
        }
        (InputKind::Auto, other) => bail!(Error::Ingest(format!(
            "cannot infer the input kind from extension {other:?}"
        ))),
    })
}

pub fn consolidate(args: &ConsolidateArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(v) = args.iters {
        cfg.fit.iterations = v;
    }
    if let Some(v) = args.lr {
        cfg.fit.lr = v;
    }
    if let Some(v) = args.queries {
        cfg.fit.queries_per_iter = v;
    }
    match args.init {
        Some(InitMode::Random) => cfg.fit.init = EmbeddingInit::Random,
        Some(InitMode::Mean) => cfg.fit.init = EmbeddingInit::TrainingMean,
        None => {}
    }
    if args.no_normalize {
        cfg.ingest.normalize = false;
    }
    let model = PriorModel::load(&args.model)?;
    let data = read_observation(&args.input, args.kind)?;
    let (mesh, report) = run_consolidation(&data, &model, &cfg.ingest, &cfg.fit, args.res)?;
    write_mesh(&args.out, &mesh)?;
    if let Some(path) = &args.report {
        write_atomic(path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    write_snapshot(&sidecar(&args.out), "consolidate", &cfg)?;
    println!(
        "sharpened mesh with {} triangles written to {} (fit loss {:.4e})",
        mesh.triangles().len(),
        args.out.display(),
        report.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory with pred/ and gt/ meshes matched by file stem.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Surface samples per mesh.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(v) = args.samples {
        cfg.eval.samples = v;
    }
    let table = benchmark(&args.pairs, &cfg.eval)?;
    print!("{}", table.to_text());
    if let Some(out) = &args.out {
        write_atomic(out, table.to_csv().as_bytes())?;
        write_snapshot(&sidecar(out), "eval", &cfg)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    /// Mesh (.ply/.obj) or oriented point cloud (.ply without faces).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Spectral cutoff radius; the full band when omitted.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Lattice resolution.
    #[arg(long)]
    pub res: Option<usize>,
    /// Oriented points sampled from a mesh input.
    #[arg(long)]
    pub points: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn spectral(args: &SpectralArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(v) = args.res {
        cfg.generation.resolution = v;
    }
    if let Some(v) = args.points {
        cfg.generation.cloud_points = v;
    }
    let g = &cfg.generation;
    let (cloud, transform) = match read_observation(&args.input, InputKind::Auto)? {
        ObservationData::Mesh(mesh) => {
            let (normalized, t) = normalize_mesh(&mesh)?;
            (
                sample_surface(
                    &normalized,
                    g.cloud_points,
                    derive_seed(g.seed, "spectral-cloud", 0),
                )?,
                t,
            )
        }
        ObservationData::Points(cloud) => {
            let pts = cloud.points();
            let (mut lo, mut hi) = (pts[0], pts[0]);
            for p in pts {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let t = fcp_core::geometry::normalization_for_bounds(&lo, &hi)?;
            let moved = OrientedPointCloud::new(
                pts.iter().map(|p| t.apply(p)).collect(),
                cloud.normals().to_vec(),
            )?;
            (moved, t)
        }
        ObservationData::Grid(_) => bail!(Error::InvalidInput(
            "spectral expects a mesh or a point cloud".into()
        )),
    };
    let cutoff = match args.cutoff {
        Some(f) => FrequencyCutoff::new(f)?,
        None => FrequencyCutoff::nyquist(g.resolution),
    };
    let rec = SpectralReconstruction::new(&cloud, g.resolution, g.smoothing)?;
    let grid = rec.occupancy(&cutoff)?;
    let mesh =
        fcp_core::spectral::extract_isosurface(&grid, 0.0)?.map_vertices(|p| transform.invert(p));
    create_dir(&args.out)?;
    let stem = args.input.file_stem().unwrap_or_default().to_string_lossy();
    let base = format!("{stem}_r{}_f{:.3}", g.resolution, cutoff.frequency);
    let mesh_path = args.out.join(format!("{base}.ply"));
    write_mesh(&mesh_path, &mesh)?;
    write_grid(&args.out.join(format!("{base}.fcpg")), &grid)?;
    write_snapshot(
        &args.out.join(format!("{base}.config.toml")),
        "spectral",
        &cfg,
    )?;
    println!("wrote {} and its occupancy grid", mesh_path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Trained model or checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Training shape whose full-frequency embedding to decode.
    #[arg(
        long,
        conflicts_with = "embedding",
        required_unless_present = "embedding"
    )]
    pub shape: Option<String>,
    /// JSON array holding an embedding.
    #[arg(long)]
    pub embedding: Option<PathBuf>,
    /// Extraction lattice resolution.
    #[arg(long, default_value_t = 128)]
    pub res: usize,
    /// Output mesh path (normalized coordinates).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn decode_embedding(args: &DecodeArgs, cfg: RunConfig) -> Result<()> {
    let model = PriorModel::load(&args.model)?;
    let e: Array1<f32> = match (&args.shape, &args.embedding) {
        (Some(id), _) => {
            let s = model
                .embeddings
                .shape_index(id)
                .ok_or_else(|| Error::InvalidInput(format!("model has no shape {id:?}")))?;
            model.embeddings.e_full(s).to_owned()
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let values: Vec<f32> = serde_json::from_str(&text).map_err(Error::from)?;
            Array1::from(values)
        }
        (None, None) => bail!(Error::InvalidInput("pass --shape or --embedding".into())),
    };
    if e.len() != model.meta.arch.embed_dim {
        bail!(Error::InvalidInput(format!(
            "embedding has {} entries, the model expects {}",
            e.len(),
            model.meta.arch.embed_dim
        )));
    }
    let mesh = sharpen(
        &model.params,
        e.view(),
        args.res,
        &NormalizationTransform::identity(),
    )?;
    write_mesh(&args.out, &mesh)?;
    write_snapshot(&sidecar(&args.out), "decode-embedding", &cfg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
