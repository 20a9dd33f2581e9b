use super::{Env, EnvStep};
use crate::error::Result;

/// Running mean and variance with parallel-merge updates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        RunningMeanStd {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    /// Folds a single observation into the statistics.
    pub fn update(&mut self, x: &[f64]) {
        let total = self.count + 1.0;
        for i in 0..self.mean.len() {
            let delta = x[i] - self.mean[i];
            let new_mean = self.mean[i] + delta / total;
            let m2 = self.var[i] * self.count + delta * delta * self.count / total;
            self.mean[i] = new_mean;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }
}

/// Observation normalisation wrapper: `clip((x − μ) / √(σ² + 1e-8), ±10)`.
///
/// Statistics update on every observation unless frozen.
#[derive(Debug, Clone)]
pub struct NormalizeObs<E> {
    inner: E,
    pub stats: RunningMeanStd,
    frozen: bool,
}

impl<E: Env> NormalizeObs<E> {
    pub fn new(inner: E) -> Self {
        let dim = inner.obs_dim();
        NormalizeObs {
            inner,
            stats: RunningMeanStd::new(dim),
            frozen: false,
        }
    }

    pub fn freeze(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.stats.mean[i]) / (self.stats.var[i] + 1e-8).sqrt()).clamp(-10.0, 10.0))
            .collect()
    }

    fn observe(&mut self, x: &[f64]) -> Vec<f64> {
        if !self.frozen {
            self.stats.update(x);
        }
        self.normalize(x)
    }
}

impl<E: Env> Env for NormalizeObs<E> {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn reset(&mut self) -> Vec<f64> {
        let x = self.inner.reset();
        self.observe(&x)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let mut s = self.inner.step(action)?;
        s.obs = self.observe(&s.obs);
        Ok(s)
    }
}
