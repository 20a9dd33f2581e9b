//! Two-stage hyperparameter selection.
//!
//! Stage one runs every grid point on every environment with a few seeds
//! and scores each point by the mean, over environments, of its area under
//! the metric curve min-max normalised across points. Stage two reruns the
//! winner on fresh seeds.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{EnvConfig, ExperimentConfig, CONFIG_SCHEMA_VERSION};
use crate::error::{HarnessError, Result};
use crate::experiment::SeedRun;
use crate::run::{self, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub name: String,
    pub base: ExperimentConfig,
    /// Environments to score on; empty means the base environment only.
    #[serde(default)]
    pub envs: Vec<EnvConfig>,
    /// JSON pointer into the experiment config (for example
    /// `/agent/alpha_w`) mapped to the values to try.
    pub axes: BTreeMap<String, Vec<Value>>,
    pub stage1_seeds: Vec<u64>,
    pub stage2_seeds: Vec<u64>,
    pub metric: String,
    #[serde(default = "yes")]
    pub higher_is_better: bool,
}

fn yes() -> bool {
    true
}

/// One grid point: pointer → value, in axis order.
pub type GridPoint = Vec<(String, Value)>;

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.axes.is_empty() || self.axes.values().any(Vec::is_empty) {
            return bad("grid must have at least one axis and every axis a value".into());
        }
        if self.stage1_seeds.is_empty() || self.stage2_seeds.is_empty() {
            return bad("both stages need seeds".into());
        }
        if let Some(s) = self.stage2_seeds.iter().find(|s| self.stage1_seeds.contains(s)) {
            return bad(format!("stage-two seed {s} is not fresh"));
        }
        for p in self.grid() {
            for env in self.environments() {
                self.instantiate(&p, env)?;
            }
        }
        Ok(())
    }

    pub fn environments(&self) -> Vec<&EnvConfig> {
        if self.envs.is_empty() {
            vec![&self.base.env]
        } else {
            self.envs.iter().collect()
        }
    }

    /// Cartesian product in canonical order: axes sorted by pointer, the
    /// last axis varying fastest, values in listed order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points: Vec<GridPoint> = vec![Vec::new()];
        for (path, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((path.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// The base config with `point` applied, running on `env`.
    pub fn instantiate(&self, point: &GridPoint, env: &EnvConfig) -> Result<ExperimentConfig> {
        let mut base = self.base.clone();
        base.env = env.clone();
        let mut v = serde_json::to_value(&base).expect("config is always serialisable");
        for (path, value) in point {
            let slot = v
                .pointer_mut(path)
                .ok_or_else(|| HarnessError::Config(format!("axis {path} does not name a config field")))?;
            *slot = value.clone();
        }
        let cfg: ExperimentConfig = serde_json::from_value(v).map_err(|e| HarnessError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Stage-one outcome of one (point, env, seed); `None` when the run failed
/// or produced no finite metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub point: usize,
    pub env: String,
    pub seed: u64,
    pub auc: Option<f64>,
}

/// Mean of the finite values of `metric`: the area under the logged curve
/// on a uniform grid, divided by its length.
pub fn auc(run: &SeedRun, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = run.series(metric).into_iter().map(|p| p.1).filter(|v| v.is_finite()).collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointScore {
    pub index: usize,
    /// Mean AUC per environment; `None` if any seed failed.
    pub per_env: BTreeMap<String, Option<f64>>,
    pub score: f64,
}

/// Scores every point. Failed points score zero on that environment; ties
/// go to the lowest index. The result depends only on the set of
/// observations, not their order.
pub fn select(observations: &[Observation], n_points: usize, higher_is_better: bool) -> Result<(usize, Vec<PointScore>)> {
    if observations.is_empty() || n_points == 0 {
        return Err(HarnessError::Empty("sweep produced no observations".into()));
    }
    let mut sorted = observations.to_vec();
    sorted.sort_by(|a, b| (a.point, &a.env, a.seed).cmp(&(b.point, &b.env, b.seed)));
    let mut cells: BTreeMap<(usize, String), Option<(f64, usize)>> = BTreeMap::new();
    for o in &sorted {
        let cell = cells.entry((o.point, o.env.clone())).or_insert(Some((0.0, 0)));
        *cell = match (*cell, o.auc) {
            (Some((s, n)), Some(a)) => Some((s + a, n + 1)),
            _ => None,
        };
    }
    let envs: Vec<String> = cells.keys().map(|k| k.1.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mean = |p: usize, e: &String| cells.get(&(p, e.clone())).copied().flatten().map(|(s, n)| s / n as f64);
    let mut scores: Vec<PointScore> = (0..n_points)
        .map(|index| PointScore {
            index,
            per_env: envs.iter().map(|e| (e.clone(), mean(index, e))).collect(),
            score: 0.0,
        })
        .collect();
    for e in &envs {
        let vals: Vec<f64> = (0..n_points).filter_map(|p| mean(p, e)).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for s in scores.iter_mut() {
            let norm = match s.per_env[e] {
                None => 0.0,
                Some(_) if hi == lo => 1.0,
                Some(x) if higher_is_better => (x - lo) / (hi - lo),
                Some(x) => (hi - x) / (hi - lo),
            };
            s.score += norm / envs.len() as f64;
        }
    }
    let winner = scores
        .iter()
        .fold(0, |best, s| if s.score > scores[best].score { s.index } else { best });
    Ok((winner, scores))
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTwo {
    pub env: String,
    pub seeds: Vec<u64>,
    pub mean_auc: Option<f64>,
    pub stderr_auc: Option<f64>,
    pub final_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub metric: String,
    pub higher_is_better: bool,
    pub points: Vec<BTreeMap<String, Value>>,
    pub stage1: Vec<PointScore>,
    pub winner: usize,
    pub stage2: Vec<StageTwo>,
    pub output_dir: PathBuf,
}

/// Runs both stages and writes `report.json` plus the stage-two metric
/// files under `<out_root>/<name>/`.
pub fn sweep(cfg: &SweepConfig, opts: &RunOptions) -> Result<SweepReport> {
    cfg.validate()?;
    let dir = opts.out_root.join(&cfg.name);
    let report_path = dir.join("report.json");
    if report_path.exists() && !opts.overwrite {
        return Err(HarnessError::OutputExists(vec![report_path]));
    }
    let grid = cfg.grid();
    let mut observations = Vec::new();
    for (i, point) in grid.iter().enumerate() {
        for env in cfg.environments() {
            let exp = cfg.instantiate(point, env)?;
            let outcomes = run::run_seeds_each(&exp, &cfg.stage1_seeds, opts.workers);
            for (seed, outcome) in cfg.stage1_seeds.iter().zip(outcomes) {
                observations.push(Observation {
                    point: i,
                    env: env.name(),
                    seed: *seed,
                    auc: outcome.ok().and_then(|r| auc(&r, &cfg.metric)),
                });
            }
        }
    }
    let (winner, stage1) = select(&observations, grid.len(), cfg.higher_is_better)?;
    let mut stage2 = Vec::new();
    for env in cfg.environments() {
        let mut exp = cfg.instantiate(&grid[winner], env)?;
        exp.seeds = cfg.stage2_seeds.clone();
        exp.output_dir = Some(dir.join("stage2").join(env.name()));
        let done = run::run(&exp, &RunOptions { overwrite: true, ..opts.clone() })?;
        let aucs: Vec<Option<f64>> = done.runs.iter().map(|r| auc(r, &cfg.metric)).collect();
        let finals: Vec<Option<f64>> = done.runs.iter().map(|r| r.last(&cfg.metric)).collect();
        stage2.push(StageTwo {
            env: env.name(),
            seeds: cfg.stage2_seeds.clone(),
            mean_auc: all_some(&aucs).map(|v| crate::stats::mean(&v)),
            stderr_auc: all_some(&aucs).map(|v| crate::stats::stderr(&v)),
            final_value: all_some(&finals).map(|v| crate::stats::mean(&v)),
        });
    }
    let report = SweepReport {
        name: cfg.name.clone(),
        metric: cfg.metric.clone(),
        higher_is_better: cfg.higher_is_better,
        points: grid.iter().map(|p| p.iter().cloned().collect()).collect(),
        stage1,
        winner,
        stage2,
        output_dir: dir.clone(),
    };
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let text = serde_json::to_string_pretty(&report).expect("report is always serialisable");
    std::fs::write(&report_path, text).map_err(|e| HarnessError::io(&report_path, e))?;
    Ok(report)
}

fn all_some(xs: &[Option<f64>]) -> Option<Vec<f64>> {
    xs.iter().copied().collect()
}
