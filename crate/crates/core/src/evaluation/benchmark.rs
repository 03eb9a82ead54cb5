//! Batch evaluation over a directory of prediction / ground-truth pairs.
//!
//! Layout: `<dir>/pred/<id>.{ply,obj}` next to `<dir>/gt/<id>.{ply,obj}`,
//! paired by file stem.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_pair, MetricReport, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::geometry::io::read_mesh;

/// Scale applied to CD_L1 in reports.
pub const CD_L1_SCALE: f64 = 10.0;
/// Scale applied to CD_L2 in reports.
pub const CD_L2_SCALE: f64 = 100.0;

pub const CSV_HEADER: &str = "pair_id,cd_l1_x10,cd_l2_x100,nc,n_samples,seed";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

/// Mean and population variance of the scaled metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<(String, MetricReport)>,
    /// Pairs left out of the aggregate, with the reason.
    pub exceptions: Vec<(String, String)>,
    pub aggregate: Option<Aggregate>,
}

fn scaled(r: &MetricReport) -> [f64; 3] {
    [r.cd_l1 * CD_L1_SCALE, r.cd_l2 * CD_L2_SCALE, r.nc]
}

fn aggregate(rows: &[(String, MetricReport)]) -> Option<Aggregate> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 3];
    for (_, r) in rows {
        for (m, v) in mean.iter_mut().zip(scaled(r)) {
            *m += v / n;
        }
    }
    let mut variance = [0.0; 3];
    for (_, r) in rows {
        for ((s, v), m) in variance.iter_mut().zip(scaled(r)).zip(mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    Some(Aggregate {
        count: rows.len(),
        mean,
        variance,
    })
}

impl BenchmarkTable {
    pub fn from_rows(
        mut rows: Vec<(String, MetricReport)>,
        exceptions: Vec<(String, String)>,
    ) -> Self {
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let aggregate = aggregate(&rows);
        Self {
            rows,
            exceptions,
            aggregate,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (id, r) in &self.rows {
            let [l1, l2, nc] = scaled(r);
            writeln!(
                out,
                "{id},{l1:.6},{l2:.6},{nc:.6},{},{}",
                r.n_samples, r.seed
            )
            .unwrap();
        }
        out
    }

    /// Human-readable table with mean/variance rows and the exceptions list.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(id, _)| id.len())
            .chain([8])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}  {:>8}",
            "pair", "CD_L1x10", "CD_L2x100", "NC"
        )
        .unwrap();
        for (id, r) in &self.rows {
            let [l1, l2, nc] = scaled(r);
            writeln!(out, "{id:<width$}  {l1:>10.4}  {l2:>10.4}  {nc:>8.4}").unwrap();
        }
        if let Some(a) = &self.aggregate {
            let [l1, l2, nc] = a.mean;
            writeln!(out, "{:<width$}  {l1:>10.4}  {l2:>10.4}  {nc:>8.4}", "mean").unwrap();
            let [l1, l2, nc] = a.variance;
            writeln!(
                out,
                "{:<width$}  {l1:>10.4e}  {l2:>10.4e}  {nc:>8.1e}",
                "variance"
            )
            .unwrap();
        }
        if !self.exceptions.is_empty() {
            writeln!(out, "\nexceptions:").unwrap();
            for (id, why) in &self.exceptions {
                writeln!(out, "  {id}: {why}").unwrap();
            }
        }
        out
    }
}

fn meshes_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("ply") | Some("obj")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Evaluates every pair under `dir`. Unpaired or unreadable meshes are
/// reported as exceptions instead of failing the whole run.
pub fn benchmark(dir: &Path, config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    let pred = meshes_by_stem(&dir.join("pred"))?;
    let gt = meshes_by_stem(&dir.join("gt"))?;
    if pred.is_empty() && gt.is_empty() {
        return Err(Error::invalid(format!(
            "no meshes under {}/pred or {}/gt",
            dir.display(),
            dir.display()
        )));
    }
    let mut exceptions = Vec::new();
    let mut pairs = Vec::new();
    for (id, p) in &pred {
        match gt.get(id) {
            Some(g) => pairs.push((id.clone(), p.clone(), g.clone())),
            None => exceptions.push((id.clone(), "missing ground truth".to_string())),
        }
    }
    for id in gt.keys().filter(|id| !pred.contains_key(*id)) {
        exceptions.push((id.clone(), "missing prediction".to_string()));
    }
    let results: Vec<(String, Result<MetricReport>)> = pairs
        .par_iter()
        .map(|(id, p, g)| {
            let report = read_mesh(p)
                .and_then(|p| Ok((p, read_mesh(g)?)))
                .and_then(|(p, g)| evaluate_pair(&p, &g, config.samples, config.seed));
            (id.clone(), report)
        })
        .collect();
    let mut rows = Vec::new();
    for (id, r) in results {
        match r {
            Ok(r) => rows.push((id, r)),
            Err(e) => exceptions.push((id, e.to_string())),
        }
    }
    exceptions.sort();
    Ok(BenchmarkTable::from_rows(rows, exceptions))
}
