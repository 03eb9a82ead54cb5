//! `fcp`: build data, train priors, sharpen observations, evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ConfigError;
use fcp_core::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fcp",
    version,
    about = "Frequency consolidation priors for sharpening shapes"
)]
struct Cli {
    /// Run configuration (TOML sections: generation, arch, train, ingest, fit, eval).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data building, decoding and evaluation.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build low/full-frequency training pairs from meshes.
    BuildData(commands::BuildDataArgs),
    /// Train a prior on a built dataset.
    Train(commands::TrainArgs),
    /// Sharpen one low-frequency observation with a trained prior.
    Consolidate(commands::ConsolidateArgs),
    /// Score predicted meshes against ground truth.
    Eval(commands::EvalArgs),
    /// Band-limited spectral reconstruction of one shape.
    Spectral(commands::SpectralArgs),
    /// Decode a raw full-frequency embedding into a mesh.
    DecodeEmbedding(commands::DecodeArgs),
}

/// Process exit status for each error class.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } => 3,
                Error::InvalidInput(_)
                | Error::Format { .. }
                | Error::TruncatedFile { .. }
                | Error::VersionMismatch { .. }
                | Error::Json(_) => 4,
                Error::Ingest(_) => 5,
                Error::Diverged { .. } => 6,
                Error::EmptySurface | Error::DegenerateField(_) | Error::ShapeRejected(_) => 7,
                Error::State(_) => 8,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FCP_LOG", "info")).init();
    let cli = Cli::parse();
    let result = (|| -> anyhow::Result<()> {
        let mut cfg = config::load_config(cli.config.as_deref())?;
        cfg.apply_seed(cli.seed);
        if let Some(jobs) = cli.jobs.or(cfg.jobs) {
            cfg.jobs = Some(jobs);
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()?;
        }
        match &cli.command {
            Command::BuildData(a) => commands::build_data(a, cfg),
            Command::Train(a) => commands::train(a, cfg),
            Command::Consolidate(a) => commands::consolidate(a, cfg),
            Command::Eval(a) => commands::eval(a, cfg),
            Command::Spectral(a) => commands::spectral(a, cfg),
            Command::DecodeEmbedding(a) => commands::decode_embedding(a, cfg),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
