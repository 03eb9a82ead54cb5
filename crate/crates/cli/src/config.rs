//! Run configuration files: TOML, i.e. flat `key = value` lines under
//! `[section]` headers. Unknown keys are errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use fcp_core::consolidation::{FitConfig, IngestConfig};
use fcp_core::dataset::GenerationConfig;
use fcp_core::evaluation::BenchmarkConfig;
use fcp_core::neural::ArchConfig;
use fcp_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every section's seed when set.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub generation: GenerationConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub ingest: IngestConfig,
    pub fit: FitConfig,
    pub eval: BenchmarkConfig,
}

#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    Ok(parse_config(&text, path)?)
}

impl RunConfig {
    /// Pushes the global seed into every section.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.generation.seed = s;
            self.train.seed = s;
            self.ingest.seed = s;
            self.fit.seed = s;
            self.eval.seed = s;
        }
    }

    pub fn snapshot(&self, command: &str) -> anyhow::Result<String> {
        Ok(format!(
            "# resolved configuration for `fcp {command}`\n{}",
            toml::to_string(self)?
        ))
    }
}

/// Writes the resolved configuration next to a run's outputs.
pub fn write_snapshot(path: &Path, command: &str, config: &RunConfig) -> anyhow::Result<()> {
    fcp_core::geometry::io::write_atomic(path, config.snapshot(command)?.as_bytes())?;
    Ok(())
}
