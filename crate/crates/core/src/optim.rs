//! SGD and Adam parameter updates, and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{Gradient, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-5
}

impl OptimizerKind {
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-5.
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Whether `delta` is an ascent direction (`Δw` updates) or a loss gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    pub step_size: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, step_size: f64, n_params: usize) -> Result<Self> {
        if let OptimizerKind::Adam { beta1, beta2, eps } = kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "Adam needs β1, β2 in [0, 1) and ε > 0 (got {beta1}, {beta2}, {eps})"
                )));
            }
        }
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => n_params,
        };
        Ok(OptimizerState {
            kind,
            step_size,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step_count: 0,
        })
    }

    pub fn sgd(step_size: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            step_size,
            m: Vec::new(),
            v: Vec::new(),
            step_count: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Applies one update. `delta` is checked for finiteness before any
    /// parameter is touched.
    pub fn apply(&mut self, params: &mut ParamVector, delta: &[f64], direction: Direction) -> Result<()> {
        if delta.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer update",
                expected: params.len(),
                actual: delta.len(),
            });
        }
        if let Some(index) = delta.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite {
                context: "optimizer update".into(),
                index,
            });
        }
        let sign = match direction {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        };
        self.step_count += 1;
        let alpha = self.step_size;
        let p = params.data_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for (pi, d) in p.iter_mut().zip(delta) {
                    *pi += sign * alpha * d;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.m.len() != p.len() {
                    return Err(Error::DimensionMismatch {
                        context: "Adam moments",
                        expected: self.m.len(),
                        actual: p.len(),
                    });
                }
                let t = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..p.len() {
                    let g = delta[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    p[i] += sign * alpha * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`OptimizerState::apply`].
pub fn apply_update(params: &mut ParamVector, delta: &[f64], opt: &mut OptimizerState, direction: Direction) -> Result<()> {
    opt.apply(params, delta, direction)
}

/// Rescales `grad` to norm `c` when its norm exceeds `c`.
pub fn clip_global_norm(grad: &Gradient, c: f64) -> Gradient {
    let mut out = grad.clone();
    clip_in_place(&mut out, c);
    out
}

/// Norms within this relative band above the threshold are left alone, so
/// a rescaled vector whose recomputed norm rounds slightly above `c` is not
/// rescaled again.
const CLIP_SLACK: f64 = 1e-12;

/// In-place [`clip_global_norm`]; returns the pre-clip norm.
pub fn clip_in_place(grad: &mut [f64], c: f64) -> f64 {
    let n = crate::param::norm(grad);
    if n > c * (1.0 + CLIP_SLACK) {
        let s = c / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Layout;
    use std::sync::Arc;

    fn scalar(v: f64) -> ParamVector {
        ParamVector::from_vec(Arc::new(Layout::from_sizes([("p", 1)])), vec![v]).unwrap()
    }

    #[test]
    fn sgd_ascent_example() {
        let mut p = scalar(1.0);
        let mut opt = OptimizerState::sgd(0.1);
        opt.apply(&mut p, &[2.0], Direction::Ascent).unwrap();
        assert!((p.as_slice()[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_example() {
        let mut p = scalar(0.0);
        let kind = OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        };
        let mut opt = OptimizerState::new(kind, 0.1, 1).unwrap();
        opt.apply(&mut p, &[1.0], Direction::Descent).unwrap();
        // m̂ = v̂ = 1 after bias correction: step = 0.1 / (1 + 1e-5)
        assert!((p.as_slice()[0] + 0.1 / (1.0 + 1e-5)).abs() < 1e-15);
        assert!((p.as_slice()[0] + 0.0999990).abs() < 1e-7);
    }

    #[test]
    fn zero_delta_leaves_params() {
        let mut p = scalar(3.0);
        let mut sgd = OptimizerState::sgd(0.5);
        sgd.apply(&mut p, &[0.0], Direction::Ascent).unwrap();
        assert_eq!(p.as_slice()[0], 3.0);
        let mut adam = OptimizerState::new(OptimizerKind::adam(), 0.5, 1).unwrap();
        adam.apply(&mut p, &[0.0], Direction::Descent).unwrap();
        assert_eq!(p.as_slice()[0], 3.0);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_without_momentum_is_normalized_sgd() {
        let kind = OptimizerKind::Adam {
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-5,
        };
        let mut p = scalar(0.0);
        let mut opt = OptimizerState::new(kind, 0.2, 1).unwrap();
        for g in [3.0, -0.5, 1e-3] {
            let before = p.as_slice()[0];
            opt.apply(&mut p, &[g], Direction::Ascent).unwrap();
            let step = p.as_slice()[0] - before;
            assert!((step - 0.2 * g / (g.abs() + 1e-5)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_delta_reports_index() {
        let layout = Arc::new(Layout::from_sizes([("p", 3)]));
        let mut p = ParamVector::zeros(layout);
        let mut opt = OptimizerState::sgd(0.1);
        let err = opt.apply(&mut p, &[0.0, 1.0, f64::INFINITY], Direction::Ascent).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2, .. }));
        assert_eq!(p.as_slice(), &[0.0, 0.0, 0.0]);
        assert!(opt.apply(&mut p, &[0.0], Direction::Ascent).is_err());
    }

    #[test]
    fn bad_adam_config_rejected() {
        let kind = OptimizerKind::Adam {
            beta1: 1.0,
            beta2: 0.9,
            eps: 1e-5,
        };
        assert!(OptimizerState::new(kind, 0.1, 1).is_err());
    }

    #[test]
    fn clip_examples() {
        let g = clip_global_norm(&Gradient(vec![3.0, 4.0]), 0.5);
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
        let small = Gradient(vec![0.1, 0.0]);
        assert_eq!(clip_global_norm(&small, 0.5), small);
    }
}
