//! Action-value control with eligibility traces: Watkins' Q(λ) and the
//! gradient TD variants GQ2(λ), QC(λ) and QRC(λ).
//!
//! Traces are decayed after greedy actions and zeroed after non-greedy
//! actions and at episode ends. The auxiliary network `ĥ` has one head per
//! action, like the action-value network.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::approximator::{argmax, Approximator, TdMode};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::optim::{Direction, OptimizerState};
use crate::prediction::{TraceState, Update};
use crate::returns::Transition;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAlgorithm {
    QLambda,
    Gq2,
    Qc,
    Qrc,
}

impl ControlAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            ControlAlgorithm::QLambda => "q_lambda",
            ControlAlgorithm::Gq2 => "gq2",
            ControlAlgorithm::Qc => "qc",
            ControlAlgorithm::Qrc => "qrc",
        }
    }
}

/// Linear interpolation from `start` to `end` over the first
/// `fraction · total_steps` steps, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.01,
            fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = self.fraction * total_steps as f64;
        if horizon <= 0.0 {
            return self.end;
        }
        let frac = (step as f64 / horizon).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub algorithm: ControlAlgorithm,
    pub lambda: f64,
    /// Regularisation of `θ`; read by QRC only.
    #[serde(default = "one")]
    pub beta: f64,
    pub alpha_q: f64,
    /// `α_h = h_step_scale · α_q`.
    #[serde(default = "one")]
    pub h_step_scale: f64,
    pub gamma: f64,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
}

fn one() -> f64 {
    1.0
}

impl ControlConfig {
    /// λ = 0.8, β = 1, SGD step 1e-4 for both networks, ε 1.0 → 0.01 over
    /// the first 20% of steps.
    pub fn defaults(algorithm: ControlAlgorithm, gamma: f64) -> Self {
        ControlConfig {
            algorithm,
            lambda: 0.8,
            beta: 1.0,
            alpha_q: 1e-4,
            h_step_scale: 1.0,
            gamma,
            epsilon: EpsilonSchedule::default(),
        }
    }

    pub fn alpha_h(&self) -> f64 {
        self.alpha_q * self.h_step_scale
    }

    pub fn effective_beta(&self) -> f64 {
        if self.algorithm == ControlAlgorithm::Qrc {
            self.beta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        let ok = (0.0..=1.0).contains(&self.lambda)
            && (0.0..=1.0).contains(&self.gamma)
            && self.beta >= 0.0
            && self.alpha_q > 0.0
            && self.h_step_scale > 0.0
            && (0.0..=1.0).contains(&e.start)
            && (0.0..=1.0).contains(&e.end)
            && e.fraction >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid control config {self:?}")))
        }
    }
}

/// ε-greedy action and whether it is the greedy (lowest-index argmax) action.
pub fn select_action(q_values: &[f64], epsilon: f64, rng: &mut Rng) -> Result<(usize, bool)> {
    if q_values.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let greedy = argmax(q_values);
    let action = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_values.len())
    } else {
        greedy
    };
    Ok((action, action == greedy))
}

/// One backward-view control update. Traces are advanced, the update is
/// formed, then the traces are zeroed if the transition was terminal or
/// the action non-greedy.
pub fn qrc_step(
    cfg: &ControlConfig,
    tr: &Transition,
    greedy: bool,
    traces: &mut TraceState,
    q: &Approximator,
    h: &Approximator,
) -> Result<Update> {
    let gl = cfg.gamma * cfg.lambda;
    let delta = q.td_error(tr, cfg.gamma, TdMode::MaxQ)?;
    let (_, g_cur) = q.output_and_grad(&tr.state, tr.action)?;
    traces.z_w.scale(gl);
    traces.z_w.axpy(1.0, &g_cur);

    let mut out = Update::zeros(q.num_params(), h.num_params());
    if cfg.algorithm == ControlAlgorithm::QLambda {
        out.dw.axpy(delta, &traces.z_w);
    } else {
        let grad_delta = q.grad_td_error(tr, cfg.gamma, TdMode::MaxQ)?;
        let (hv, hg) = h.output_and_grad(&tr.state, tr.action)?;
        traces.z_h = gl * traces.z_h + hv;
        traces.z_theta.scale(gl);
        traces.z_theta.axpy(1.0, &hg);
        if cfg.algorithm != ControlAlgorithm::Gq2 {
            out.dw.axpy(delta, &traces.z_w);
            out.dw.axpy(-hv, &g_cur);
        }
        out.dw.axpy(-traces.z_h, &grad_delta);
        out.dtheta.axpy(delta, &traces.z_theta);
        out.dtheta.axpy(-hv, &hg);
        let beta = cfg.effective_beta();
        if beta != 0.0 {
            out.dtheta.axpy(-beta, h.params().as_slice());
        }
    }
    let context = |what: &str| format!("{} {what}", cfg.algorithm.name());
    out.dw.check_finite(&context("Δw"))?;
    out.dtheta.check_finite(&context("Δθ"))?;
    if tr.terminal || !greedy {
        traces.reset();
    }
    Ok(out)
}

/// Online ε-greedy control agent with SGD steps.
#[derive(Debug, Clone)]
pub struct ControlAgent {
    pub cfg: ControlConfig,
    pub q: Approximator,
    pub h: Approximator,
    traces: TraceState,
    opt_q: OptimizerState,
    opt_h: OptimizerState,
}

impl ControlAgent {
    pub fn new(cfg: ControlConfig, q: Approximator, h: Approximator) -> Result<Self> {
        cfg.validate()?;
        if h.outputs() != q.outputs() {
            return Err(Error::OutputArity {
                context: "h heads vs action heads",
                expected: q.outputs(),
                actual: h.outputs(),
            });
        }
        Ok(ControlAgent {
            traces: TraceState::zeros(q.num_params(), h.num_params()),
            opt_q: OptimizerState::sgd(cfg.alpha_q),
            opt_h: OptimizerState::sgd(cfg.alpha_h()),
            cfg,
            q,
            h,
        })
    }

    pub fn traces(&self) -> &TraceState {
        &self.traces
    }

    pub fn act(&self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<(usize, bool)> {
        select_action(&self.q.action_values(obs)?, epsilon, rng)
    }

    pub fn observe(&mut self, tr: &Transition, greedy: bool) -> Result<()> {
        let u = qrc_step(&self.cfg, tr, greedy, &mut self.traces, &self.q, &self.h)?;
        self.opt_q.apply(self.q.params_mut(), &u.dw, Direction::Ascent)?;
        if self.cfg.algorithm != ControlAlgorithm::QLambda {
            self.opt_h.apply(self.h.params_mut(), &u.dtheta, Direction::Ascent)?;
        }
        Ok(())
    }

    pub fn reset_traces(&mut self) {
        self.traces.reset();
    }
}

/// Per-step record passed to the training callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Steps completed so far (1-based).
    pub step: u64,
    pub epsilon: f64,
    /// Undiscounted return of the episode that just ended, if any.
    pub episode_return: Option<f64>,
}

/// Runs `total_steps` of online control on `env`.
pub fn train<E: Env, F: FnMut(&StepInfo, &ControlAgent) -> Result<()>>(
    env: &mut E,
    agent: &mut ControlAgent,
    total_steps: u64,
    rng: &mut Rng,
    mut on_step: F,
) -> Result<()> {
    let mut obs = env.reset();
    let mut ep_return = 0.0;
    for t in 0..total_steps {
        let epsilon = agent.cfg.epsilon.value(t, total_steps);
        let (action, greedy) = agent.act(&obs, epsilon, rng)?;
        let step = env.step(action)?;
        ep_return += step.reward;
        let tr = Transition::new(obs, action, step.reward, step.obs, step.terminal);
        agent.observe(&tr, greedy)?;
        let done = step.terminal || step.truncated;
        let mut info = StepInfo {
            step: t + 1,
            epsilon,
            episode_return: None,
        };
        if done {
            agent.reset_traces();
            info.episode_return = Some(ep_return);
            ep_return = 0.0;
            obs = env.reset();
        } else {
            obs = tr.next_state;
        }
        on_step(&info, agent)?;
    }
    Ok(())
}

/// Undiscounted return of one greedy episode, cut at `max_steps`.
pub fn evaluate_greedy<E: Env>(env: &mut E, q: &Approximator, max_steps: usize) -> Result<f64> {
    let mut obs = env.reset();
    let mut total = 0.0;
    for _ in 0..max_steps {
        let a = argmax(&q.action_values(&obs)?);
        let s = env.step(a)?;
        total += s.reward;
        if s.terminal || s.truncated {
            break;
        }
        obs = s.obs;
    }
    Ok(total)
}
