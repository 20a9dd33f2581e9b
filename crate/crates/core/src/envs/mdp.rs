use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Env, EnvStep};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MDP_SCHEMA_VERSION: u32 = 1;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Exact tabular MDP.
///
/// `transitions[s][a][s']` is `P(s' | s, a)` and `rewards[s][a][s']` the
/// expected reward on that transition. Terminal states must self-loop with
/// zero reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub schema_version: u32,
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub start: Vec<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub terminal_states: BTreeSet<usize>,
}

impl MdpSpec {
    /// Validates and returns the MDP.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        start: Vec<f64>,
        gamma: f64,
        terminal_states: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        let spec = MdpSpec {
            schema_version: MDP_SCHEMA_VERSION,
            n_states,
            n_actions,
            transitions,
            rewards,
            start,
            gamma,
            terminal_states: terminal_states.into_iter().collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMdp(msg));
        if self.schema_version != MDP_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("need at least one state and one action".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.transitions.len() != self.n_states || self.rewards.len() != self.n_states {
            return bad("transition/reward tensors must have n_states rows".into());
        }
        for s in 0..self.n_states {
            if self.transitions[s].len() != self.n_actions || self.rewards[s].len() != self.n_actions {
                return bad(format!("state {s} must have n_actions rows"));
            }
            for a in 0..self.n_actions {
                let row = &self.transitions[s][a];
                let rew = &self.rewards[s][a];
                if row.len() != self.n_states || rew.len() != self.n_states {
                    return bad(format!("P[{s}][{a}] / R[{s}][{a}] must have n_states entries"));
                }
                if row.iter().any(|p| !(*p >= 0.0)) || rew.iter().any(|r| !r.is_finite()) {
                    return bad(format!("P[{s}][{a}] has a negative/non-finite entry or R is non-finite"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return bad(format!("P[{s}][{a}] sums to {sum}"));
                }
                if self.terminal_states.contains(&s) && (row[s] != 1.0 || rew[s] != 0.0) {
                    return bad(format!("terminal state {s} must self-loop with zero reward"));
                }
            }
        }
        if let Some(&t) = self.terminal_states.iter().find(|&&t| t >= self.n_states) {
            return bad(format!("terminal state {t} out of range"));
        }
        if self.start.len() != self.n_states || self.start.iter().any(|p| !(*p >= 0.0)) {
            return bad("start distribution must be a nonnegative n_states vector".into());
        }
        let sum: f64 = self.start.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return bad(format!("start distribution sums to {sum}"));
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.contains(&s)
    }

    pub fn is_episodic(&self) -> bool {
        !self.terminal_states.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MdpSpec is always serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MdpSpec = serde_json::from_str(text).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    OneHot,
    Baird,
    BoyanInterpolation,
    Custom,
}

/// A fixed table of feature vectors, one row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kind: FeatureKind,
    rows: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn new(kind: FeatureKind, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(s) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "feature row",
                expected: dim,
                actual: rows[s].len(),
            });
        }
        Ok(FeatureMap { kind, rows })
    }

    /// One-hot features of dimension `n`.
    pub fn one_hot(n: usize) -> Self {
        let rows = (0..n)
            .map(|s| {
                let mut r = vec![0.0; n];
                r[s] = 1.0;
                r
            })
            .collect();
        FeatureMap {
            kind: FeatureKind::OneHot,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn features(&self, s: usize) -> &[f64] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Samples an index from a discrete distribution.
pub(crate) fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last index with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Simulator over an [`MdpSpec`], emitting feature vectors as observations.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: MdpSpec,
    features: FeatureMap,
    state: usize,
    steps: usize,
    max_steps: Option<usize>,
    rng: Rng,
}

impl TabularEnv {
    pub fn new(mdp: MdpSpec, features: FeatureMap, rng: Rng) -> Result<Self> {
        if features.n_states() != mdp.n_states {
            return Err(Error::DimensionMismatch {
                context: "feature map states",
                expected: mdp.n_states,
                actual: features.n_states(),
            });
        }
        let mut env = TabularEnv {
            mdp,
            features,
            state: 0,
            steps: 0,
            max_steps: None,
            rng,
        };
        env.reset_index();
        Ok(env)
    }

    /// Episodes longer than `max_steps` are reported as truncated.
    pub fn with_time_limit(mut self, max_steps: usize) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn mdp(&self) -> &MdpSpec {
        &self.mdp
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.features
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn reset_index(&mut self) -> usize {
        self.state = sample_index(&self.mdp.start, &mut self.rng);
        self.steps = 0;
        self.state
    }

    /// Index-level step: `(next_state, reward, terminal, truncated)`.
    pub fn step_index(&mut self, action: usize) -> Result<(usize, f64, bool, bool)> {
        if action >= self.mdp.n_actions {
            return Err(Error::EnvStep {
                step: self.steps,
                reason: format!("action {action} out of range"),
            });
        }
        let s = self.state;
        let next = sample_index(&self.mdp.transitions[s][action], &mut self.rng);
        let reward = self.mdp.rewards[s][action][next];
        self.state = next;
        self.steps += 1;
        let terminal = self.mdp.is_terminal(next);
        let truncated = !terminal && self.max_steps.is_some_and(|m| self.steps >= m);
        Ok((next, reward, terminal, truncated))
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }
}

impl Env for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.features.dim()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions
    }

    fn reset(&mut self) -> Vec<f64> {
        let s = self.reset_index();
        self.features.features(s).to_vec()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let (next, reward, terminal, truncated) = self.step_index(action)?;
        Ok(EnvStep {
            obs: self.features.features(next).to_vec(),
            reward,
            terminal,
            truncated,
        })
    }
}
