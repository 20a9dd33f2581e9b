//! Return targets and TD(λ) errors over finite trajectories.
//!
//! All recursions run backwards over the trajectory and zero the `γλ` carry
//! at terminal transitions, so a trajectory may span several episodes.

use serde::{Deserialize, Serialize};

use crate::approximator::Approximator;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::param::Gradient;

/// One step of agent-environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Probability the behavior policy assigned to `action`.
    pub behavior_prob: f64,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: usize, reward: f64, next_state: Vec<f64>, terminal: bool) -> Self {
        Transition {
            state,
            action,
            reward,
            next_state,
            terminal,
            behavior_prob: 1.0,
        }
    }

    pub fn with_behavior_prob(mut self, p: f64) -> Self {
        self.behavior_prob = p;
        self
    }
}

/// Consecutive transitions plus the value of the state after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    transitions: Vec<Transition>,
    /// `v̂` of the final next state; ignored when the last step is terminal.
    pub bootstrap_value: f64,
}

impl Trajectory {
    /// Validates contiguity: every non-terminal step's `next_state` must be
    /// the following step's `state`.
    pub fn new(transitions: Vec<Transition>, bootstrap_value: f64) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("trajectory must be nonempty".into()));
        }
        for (i, pair) in transitions.windows(2).enumerate() {
            if !pair[0].terminal && pair[0].next_state != pair[1].state {
                return Err(Error::InvalidArgument(format!(
                    "trajectory is not contiguous at step {i}"
                )));
            }
        }
        if let Some((i, t)) = transitions.iter().enumerate().find(|(_, t)| !t.reward.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("reward (value {})", t.reward),
                index: i,
            });
        }
        Ok(Trajectory {
            transitions,
            bootstrap_value,
        })
    }

    /// Builds a trajectory whose bootstrap value is `v(last next_state)`.
    pub fn bootstrapped<V: Fn(&[f64]) -> f64>(transitions: Vec<Transition>, v: V) -> Result<Self> {
        let boot = match transitions.last() {
            Some(t) if !t.terminal => v(&t.next_state),
            _ => 0.0,
        };
        Trajectory::new(transitions, boot)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    fn terminals(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.terminal).collect()
    }

    /// Value of the state following step `t` (zero past a terminal).
    fn next_value<V: Fn(&[f64]) -> f64>(&self, t: usize, v: &V) -> f64 {
        let tr = &self.transitions[t];
        if tr.terminal {
            0.0
        } else if t + 1 == self.transitions.len() {
            self.bootstrap_value
        } else {
            v(&tr.next_state)
        }
    }
}

/// One-step TD errors `δ_t = R_{t+1} + γ v(S_{t+1}) − v(S_t)`.
pub fn td_errors<V: Fn(&[f64]) -> f64>(traj: &Trajectory, gamma: f64, v: V) -> Vec<f64> {
    (0..traj.len())
        .map(|t| {
            let tr = &traj.transitions[t];
            tr.reward + gamma * traj.next_value(t, &v) - v(&tr.state)
        })
        .collect()
}

/// Backward recursion `e_t = ρ_t (δ_t + γλ e_{t+1})`, carry cut at terminals.
/// With `ratios = None` every `ρ_t` is one.
pub fn lambda_recursion(deltas: &[f64], terminals: &[bool], gamma_lambda: f64, ratios: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; deltas.len()];
    let mut carry = 0.0;
    for t in (0..deltas.len()).rev() {
        if terminals[t] {
            carry = 0.0;
        }
        let rho = ratios.map_or(1.0, |r| r[t]);
        carry = rho * (deltas[t] + gamma_lambda * carry);
        out[t] = carry;
    }
    out
}

/// `G^(n)_t = Σ_{i<n} γ^i R_{t+1+i} + γ^n v(S_{t+n})`, stopping at a terminal.
pub fn n_step_return<V: Fn(&[f64]) -> f64>(traj: &Trajectory, t: usize, n: usize, gamma: f64, v: V) -> Result<f64> {
    if t >= traj.len() {
        return Err(Error::OutOfRange {
            context: "n_step_return start",
            index: t,
            len: traj.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut g = 0.0;
    let mut discount = 1.0;
    for i in 0..n {
        let k = t + i;
        let Some(tr) = traj.transitions.get(k) else {
            return Err(Error::OutOfRange {
                context: "n_step_return horizon",
                index: t + n,
                len: traj.len(),
            });
        };
        g += discount * tr.reward;
        discount *= gamma;
        if tr.terminal {
            return Ok(g);
        }
        if i + 1 == n {
            g += discount * traj.next_value(k, &v);
        }
    }
    Ok(g)
}

/// TD(λ) errors `δ^λ_t = Σ_k (γλ)^k δ_{t+k}` truncated at the trajectory end.
pub fn td_lambda_error_sequence<V: Fn(&[f64]) -> f64>(traj: &Trajectory, gamma: f64, lambda: f64, v: V) -> Vec<f64> {
    let deltas = td_errors(traj, gamma, &v);
    lambda_recursion(&deltas, &traj.terminals(), gamma * lambda, None)
}

/// Truncated λ-return `G^λ_{t:T} = v(S_t) + δ^λ_{t:T}`.
pub fn lambda_return_truncated<V: Fn(&[f64]) -> f64>(traj: &Trajectory, t: usize, gamma: f64, lambda: f64, v: V) -> Result<f64> {
    if t >= traj.len() {
        return Err(Error::OutOfRange {
            context: "lambda_return_truncated",
            index: t,
            len: traj.len(),
        });
    }
    let errs = td_lambda_error_sequence(traj, gamma, lambda, &v);
    Ok(v(&traj.transitions[t].state) + errs[t])
}

/// `ρ_t = π(A_t|S_t) / b(A_t|S_t)` for every step.
pub fn importance_ratios<P: Fn(&Transition) -> f64>(traj: &Trajectory, target_prob: P) -> Result<Vec<f64>> {
    traj.transitions
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if !(t.behavior_prob > 0.0) {
                Err(Error::ZeroBehaviorProb {
                    step: i,
                    value: t.behavior_prob,
                })
            } else {
                Ok(target_prob(t) / t.behavior_prob)
            }
        })
        .collect()
}

/// Bias-corrected TD(λ) errors `δ̂^λ_t = ρ_t (γλ δ̂^λ_{t+1} + δ_t)`.
pub fn is_corrected_td_lambda_error<V, P>(traj: &Trajectory, gamma: f64, lambda: f64, v: V, target_prob: P) -> Result<Vec<f64>>
where
    V: Fn(&[f64]) -> f64,
    P: Fn(&Transition) -> f64,
{
    let rho = importance_ratios(traj, target_prob)?;
    let deltas = td_errors(traj, gamma, &v);
    Ok(lambda_recursion(&deltas, &traj.terminals(), gamma * lambda, Some(&rho)))
}

/// Per-step TD(λ) quantities evaluated with one set of value parameters.
#[derive(Debug, Clone)]
pub struct TdLambdaGrads {
    /// `V_t = v̂(S_t)`
    pub values: Vec<f64>,
    /// `∇_w V_t`
    pub value_grads: Vec<Gradient>,
    /// `δ_t`
    pub deltas: Vec<f64>,
    /// `∇_w δ_t`
    pub delta_grads: Vec<Gradient>,
    /// `δ^λ_t` (IS-corrected when ratios were supplied)
    pub errors: Vec<f64>,
    /// `∇_w δ^λ_t`
    pub error_grads: Vec<Gradient>,
}

/// TD(λ) errors and their parameter gradients with the approximator's
/// current parameters:
///
/// ```text
/// ∇δ_j   = γ ∇v̂(S_{j+1}) − ∇v̂(S_j)
/// ∇δ^λ_j = ρ_j (∇δ_j + γλ ∇δ^λ_{j+1})
/// ```
///
/// Values and gradients of every state are computed up front, then one
/// backward sweep produces both recursions.
pub fn td_lambda_error_and_grad(traj: &Trajectory, v: &Approximator, gamma: f64, lambda: f64, ratios: Option<&[f64]>) -> Result<TdLambdaGrads> {
    td_lambda_error_and_grad_with(Exec::Sequential, traj, v, gamma, lambda, ratios)
}

/// As [`td_lambda_error_and_grad`], evaluating per-state gradients under `exec`.
pub fn td_lambda_error_and_grad_with(
    exec: Exec,
    traj: &Trajectory,
    v: &Approximator,
    gamma: f64,
    lambda: f64,
    ratios: Option<&[f64]>,
) -> Result<TdLambdaGrads> {
    let n = traj.len();
    if let Some(r) = ratios {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                context: "importance ratios",
                expected: n,
                actual: r.len(),
            });
        }
    }
    if v.outputs() != 1 {
        return Err(Error::OutputArity {
            context: "td_lambda_error_and_grad",
            expected: 1,
            actual: v.outputs(),
        });
    }
    let trs = traj.transitions();
    // states S_0..S_{n-1} plus the bootstrap state when the last step continues
    let mut states: Vec<&[f64]> = trs.iter().map(|t| t.state.as_slice()).collect();
    let last = &trs[n - 1];
    if !last.terminal {
        states.push(&last.next_state);
    }
    let evals = par::map(exec, &states, |s| v.output_and_grad(s, 0));
    let mut values = Vec::with_capacity(states.len());
    let mut grads = Vec::with_capacity(states.len());
    for e in evals {
        let (val, g) = e?;
        values.push(val);
        grads.push(g);
    }

    let dim = v.num_params();
    let gl = gamma * lambda;
    let mut deltas = vec![0.0; n];
    let mut delta_grads = vec![Gradient::default(); n];
    let mut errors = vec![0.0; n];
    let mut error_grads = vec![Gradient::default(); n];
    let mut carry = 0.0;
    let mut carry_grad = Gradient::zeros(dim);
    for j in (0..n).rev() {
        let tr = &trs[j];
        let mut dg = Gradient::zeros(dim);
        let next_v = if tr.terminal {
            0.0
        } else {
            dg.axpy(gamma, &grads[j + 1]);
            values[j + 1]
        };
        dg.axpy(-1.0, &grads[j]);
        let delta = tr.reward + gamma * next_v - values[j];
        if tr.terminal {
            carry = 0.0;
            carry_grad.fill_zero();
        }
        let rho = ratios.map_or(1.0, |r| r[j]);
        carry = rho * (delta + gl * carry);
        carry_grad.scale(gl);
        carry_grad.axpy(1.0, &dg);
        carry_grad.scale(rho);
        deltas[j] = delta;
        errors[j] = carry;
        error_grads[j] = carry_grad.clone();
        delta_grads[j] = dg;
    }
    values.truncate(n);
    grads.truncate(n);
    Ok(TdLambdaGrads {
        values,
        value_grads: grads,
        deltas,
        delta_grads,
        errors,
        error_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(rewards: &[f64], terminal_last: bool) -> Trajectory {
        // scalar states 0, 1, 2, ... as one-dimensional features
        let trs = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                Transition::new(vec![i as f64], 0, r, vec![i as f64 + 1.0], terminal_last && i + 1 == rewards.len())
            })
            .collect();
        Trajectory::new(trs, 0.0).unwrap()
    }

    #[test]
    fn n_step_examples() {
        let mut traj = chain(&[1.0, 1.0], false);
        traj.bootstrap_value = 4.0;
        let v = |s: &[f64]| if s[0] == 2.0 { 4.0 } else { 0.0 };
        assert_eq!(n_step_return(&traj, 0, 2, 0.5, v).unwrap(), 2.5);
        assert_eq!(n_step_return(&traj, 0, 1, 0.5, |_: &[f64]| 0.0).unwrap(), 1.0);
        let term = chain(&[1.0, 5.0], true);
        // terminal after the second step; n larger than remaining fails only
        // when no terminal cuts the horizon
        assert_eq!(n_step_return(&term, 1, 3, 0.9, |_: &[f64]| 7.0).unwrap(), 5.0);
        assert!(n_step_return(&traj, 1, 3, 0.9, v).is_err());
        assert!(n_step_return(&traj, 5, 1, 0.9, v).is_err());
    }

    #[test]
    fn lambda_recursion_examples() {
        let d = [1.0, 2.0];
        assert_eq!(lambda_recursion(&d, &[false, false], 0.25, None), vec![1.5, 2.0]);
        assert_eq!(lambda_recursion(&d, &[false, false], 0.0, None), vec![1.0, 2.0]);
        assert_eq!(lambda_recursion(&[0.0; 3], &[false; 3], 0.9, None), vec![0.0; 3]);
        // IS: ρ=[2, 0.5], γλ=0.25 → [2.5, 1]
        assert_eq!(lambda_recursion(&d, &[false, false], 0.25, Some(&[2.0, 0.5])), vec![2.5, 1.0]);
        // ρ_t = 0 zeroes that step regardless of the future
        assert_eq!(lambda_recursion(&d, &[false, false], 0.25, Some(&[0.0, 1.0]))[0], 0.0);
        // carry is cut at a terminal inside the sequence
        assert_eq!(lambda_recursion(&d, &[true, false], 0.5, None), vec![1.0, 2.0]);
    }

    #[test]
    fn lambda_return_examples() {
        let traj = chain(&[1.0, 2.0, 3.0], true);
        let v = |s: &[f64]| 0.1 * s[0];
        let g0 = lambda_return_truncated(&traj, 0, 0.9, 0.0, v).unwrap();
        assert!((g0 - (1.0 + 0.9 * 0.1)).abs() < 1e-15);
        let mc = lambda_return_truncated(&traj, 0, 0.9, 1.0, v).unwrap();
        assert!((mc - (1.0 + 0.9 * 2.0 + 0.81 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_behavior_prob_is_an_error() {
        let mut traj = chain(&[1.0], true);
        traj.transitions[0].behavior_prob = 0.0;
        let r = is_corrected_td_lambda_error(&traj, 0.9, 0.5, |_: &[f64]| 0.0, |_: &Transition| 1.0);
        assert!(matches!(r, Err(Error::ZeroBehaviorProb { step: 0, .. })));
    }

    #[test]
    fn non_contiguous_trajectory_rejected() {
        let a = Transition::new(vec![0.0], 0, 0.0, vec![1.0], false);
        let b = Transition::new(vec![2.0], 0, 0.0, vec![3.0], false);
        assert!(Trajectory::new(vec![a.clone(), b.clone()], 0.0).is_err());
        let a_term = Transition { terminal: true, ..a };
        assert!(Trajectory::new(vec![a_term, b], 0.0).is_ok());
        assert!(Trajectory::new(vec![], 0.0).is_err());
    }

    #[test]
    fn lambda_zero_gradient_is_one_step() {
        let mut v = Approximator::linear(2, 1);
        v.set_params(&[0.3, -0.2]).unwrap();
        let trs = vec![
            Transition::new(vec![1.0, 0.0], 0, 1.0, vec![0.0, 1.0], false),
            Transition::new(vec![0.0, 1.0], 0, 0.0, vec![1.0, 1.0], true),
        ];
        let traj = Trajectory::new(trs, 0.0).unwrap();
        let out = td_lambda_error_and_grad(&traj, &v, 0.5, 0.0, None).unwrap();
        assert_eq!(out.error_grads[0].0, vec![-1.0, 0.5]);
        // terminal final step: −∇v̂(S_{T−1})
        assert_eq!(out.error_grads[1].0, vec![0.0, -1.0]);
    }
}
