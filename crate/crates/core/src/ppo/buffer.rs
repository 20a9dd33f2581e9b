use super::policy::CategoricalPolicy;
use crate::approximator::Approximator;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::returns::{lambda_recursion, Trajectory, Transition};
use crate::rng::Rng;

/// A fixed-length rollout collected under the acting parameters.
///
/// `dones[j]` marks the end of an episode at step `j`, by termination or
/// by time limit; no value is bootstrapped across it.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// `v̂_old(obs[j])`; empty when collected without a critic.
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Observation after the final step.
    pub next_obs: Vec<f64>,
    /// `v̂_old(next_obs)`, or 0 without a critic; unused when the final step
    /// ends an episode.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn next_state(&self, j: usize) -> &[f64] {
        if j + 1 < self.len() {
            &self.obs[j + 1]
        } else {
            &self.next_obs
        }
    }

    /// Contiguous, non-overlapping sequences of length `seq_len` covering the
    /// buffer, as trajectories. The bootstrap value of each trajectory is a
    /// placeholder; callers recompute it under current parameters.
    pub fn sequences(&self, seq_len: usize) -> Result<Vec<Trajectory>> {
        if seq_len == 0 || self.len() % seq_len != 0 {
            return Err(Error::InvalidArgument(format!(
                "rollout length {} is not divisible by sequence length {seq_len}",
                self.len()
            )));
        }
        (0..self.len() / seq_len)
            .map(|k| {
                let trs = (k * seq_len..(k + 1) * seq_len)
                    .map(|j| Transition {
                        state: self.obs[j].clone(),
                        action: self.actions[j],
                        reward: self.rewards[j],
                        next_state: self.next_state(j).to_vec(),
                        terminal: self.dones[j],
                        behavior_prob: self.log_probs[j].exp(),
                    })
                    .collect();
                Trajectory::new(trs, 0.0)
            })
            .collect()
    }
}

/// Environment position and episode bookkeeping carried across rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState {
    pub obs: Vec<f64>,
    pub steps: u64,
    pub episode_return: f64,
    pub episode_len: usize,
    /// `(global step at episode end, undiscounted return)`
    pub completed: Vec<(u64, f64)>,
}

impl RolloutState {
    pub fn start<E: Env>(env: &mut E) -> Self {
        RolloutState {
            obs: env.reset(),
            steps: 0,
            episode_return: 0.0,
            episode_len: 0,
            completed: Vec::new(),
        }
    }
}

/// Runs the policy for `len` steps, resetting the environment at episode
/// ends. Log-probabilities, and values when a critic is given, are recorded
/// under the acting parameters.
pub fn collect_rollout<E: Env>(
    env: &mut E,
    policy: &CategoricalPolicy,
    critic: Option<&Approximator>,
    len: usize,
    state: &mut RolloutState,
    rng: &mut Rng,
) -> Result<RolloutBuffer> {
    if len == 0 {
        return Err(Error::InvalidArgument("rollout length must be ≥ 1".into()));
    }
    let mut buf = RolloutBuffer {
        obs: Vec::with_capacity(len),
        actions: Vec::with_capacity(len),
        rewards: Vec::with_capacity(len),
        log_probs: Vec::with_capacity(len),
        values: Vec::with_capacity(if critic.is_some() { len } else { 0 }),
        dones: Vec::with_capacity(len),
        next_obs: Vec::new(),
        bootstrap_value: 0.0,
    };
    for i in 0..len {
        let (action, logp) = policy.sample(&state.obs, rng)?;
        if let Some(v) = critic {
            buf.values.push(v.value(&state.obs)?);
        }
        let step = env.step(action).map_err(|e| Error::EnvStep {
            step: i,
            reason: e.to_string(),
        })?;
        state.steps += 1;
        state.episode_return += step.reward;
        state.episode_len += 1;
        let done = step.done();
        let obs = std::mem::replace(&mut state.obs, step.obs);
        buf.obs.push(obs);
        buf.actions.push(action);
        buf.rewards.push(step.reward);
        buf.log_probs.push(logp);
        buf.dones.push(done);
        if done {
            state.completed.push((state.steps, state.episode_return));
            state.episode_return = 0.0;
            state.episode_len = 0;
            state.obs = env.reset();
        }
    }
    buf.next_obs = state.obs.clone();
    if let Some(v) = critic {
        buf.bootstrap_value = v.value(&buf.next_obs)?;
    }
    Ok(buf)
}

/// Generalised advantage estimates and λ-returns from the recorded values.
#[derive(Debug, Clone, PartialEq)]
pub struct Gae {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// `Â_j = δ_j + γλ Â_{j+1}` with the carry cut at episode ends, and
/// `Ĝ_j = Â_j + v̂_old(s_j)`.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> Gae {
    let n = buf.len();
    assert_eq!(buf.values.len(), n, "GAE needs a rollout collected with a critic");
    let deltas: Vec<f64> = (0..n)
        .map(|j| {
            let next = if buf.dones[j] {
                0.0
            } else if j + 1 < n {
                buf.values[j + 1]
            } else {
                buf.bootstrap_value
            };
            buf.rewards[j] + gamma * next - buf.values[j]
        })
        .collect();
    let advantages = lambda_recursion(&deltas, &buf.dones, gamma * lambda, None);
    let returns = advantages.iter().zip(&buf.values).map(|(a, v)| a + v).collect();
    Gae { advantages, returns }
}

/// Shifts and scales `xs` to mean 0 and (population) standard deviation 1.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for x in xs.iter_mut() {
        *x = (*x - mean) / std;
    }
}
