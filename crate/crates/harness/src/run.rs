//! Running configured seeds and persisting their metrics.
//!
//! Layout under the run directory: `seed_<n>.csv` with columns
//! `step,metric,value` and `seed_<n>.manifest.json`. The CSV is a pure
//! function of (config, seed); timing lives only in the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gradtd::par::Exec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{run_seed, Record, SeedRun};

pub const CSV_HEADER: &str = "step,metric,value";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub sps: f64,
    pub wall_clock_s: f64,
    pub version: String,
}

/// SHA-256 of the compact JSON encoding, which has a fixed field order.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    // neither the seed list nor the output location changes what one seed computes
    canonical.output_dir = None;
    canonical.seeds.clear();
    let bytes = serde_json::to_vec(&canonical).expect("config is always serialisable");
    Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn render_csv(records: &[Record]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        // `{}` on f64 is the shortest round-trip form, so the text is exact
        let _ = writeln!(out, "{},{},{}", r.step, r.metric, r.value);
    }
    out
}

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn manifest_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.manifest.json"))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_root: PathBuf,
    pub overwrite: bool,
    /// Seeds run concurrently; `1` runs them one after another.
    pub workers: usize,
    /// Overrides the config's seed list.
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifests: Vec<Manifest>,
    pub runs: Vec<SeedRun>,
}

/// Runs every seed and writes its CSV and manifest. Refuses to start if
/// any output already exists unless `overwrite` is set.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if let Some(seeds) = &opts.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    let dir = cfg.run_dir(&opts.out_root);
    let existing: Vec<PathBuf> = cfg
        .seeds
        .iter()
        .flat_map(|s| [csv_path(&dir, *s), manifest_path(&dir, *s)])
        .filter(|p| p.exists())
        .collect();
    if !existing.is_empty() && !opts.overwrite {
        return Err(HarnessError::OutputExists(existing));
    }
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let runs = run_seeds(&cfg, &cfg.seeds, opts.workers)?;
    let hash = config_hash(&cfg);
    let mut manifests = Vec::with_capacity(runs.len());
    for run in &runs {
        manifests.push(write_seed(&dir, &hash, run)?);
    }
    write_file(&dir.join("config.json"), &cfg.to_json())?;
    Ok(RunSummary { dir, manifests, runs })
}

/// Runs `seeds` with at most `workers` in flight. With one worker, seeds
/// run in order and each may use data parallelism internally; otherwise
/// seeds run concurrently and each is sequential inside.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Result<Vec<SeedRun>> {
    run_seeds_each(cfg, seeds, workers).into_iter().collect()
}

/// As [`run_seeds`], keeping each seed's outcome.
pub fn run_seeds_each(cfg: &ExperimentConfig, seeds: &[u64], workers: usize) -> Vec<Result<SeedRun>> {
    if workers <= 1 || seeds.len() <= 1 {
        return seeds.iter().map(|s| run_seed(cfg, *s, Exec::default())).collect();
    }
    concurrent(workers, || gradtd::par::map(Exec::Parallel, seeds, |s| run_seed(cfg, *s, Exec::Sequential)))
}

#[cfg(feature = "parallel")]
fn concurrent<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn concurrent<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn write_seed(dir: &Path, hash: &str, run: &SeedRun) -> Result<Manifest> {
    write_file(&csv_path(dir, run.seed), &render_csv(&run.records))?;
    let manifest = Manifest {
        config_hash: hash.to_string(),
        seed: run.seed,
        sps: run.sps(),
        wall_clock_s: run.wall_clock_s,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest is always serialisable");
    write_file(&manifest_path(dir, run.seed), &text)?;
    Ok(manifest)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
