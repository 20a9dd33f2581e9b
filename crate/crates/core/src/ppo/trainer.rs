use std::time::Instant;

use super::buffer::{collect_rollout, compute_gae, RolloutState};
use super::update::{gradient_ppo_update, ppo_update, ActorCritic, Diagnostics};
use super::{CategoricalPolicy, PpoConfig, Variant};
use crate::approximator::{Activation, Approximator};
use crate::envs::{Env, NormalizeObs};
use crate::error::Result;
use crate::optim::{OptimizerKind, OptimizerState};
use crate::par::Exec;
use crate::rng::{stream, Stream};

/// Policy head scaled by 0.01, value and `ĥ` heads by 1.
pub fn build_actor_critic(
    cfg: &PpoConfig,
    variant: Variant,
    obs_dim: usize,
    n_actions: usize,
    rng: &mut crate::rng::Rng,
) -> Result<ActorCritic> {
    let adam = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: cfg.adam_eps,
    };
    let policy = Approximator::mlp(obs_dim, &cfg.hidden, n_actions, Activation::Tanh, 0.01, rng);
    let v = Approximator::mlp(obs_dim, &cfg.hidden, 1, Activation::Tanh, 1.0, rng);
    let (h, opt_h) = match variant {
        Variant::Ppo => (None, None),
        Variant::GradientPpo => {
            let h = Approximator::mlp(obs_dim, &cfg.hidden, 1, Activation::Tanh, 1.0, rng);
            let opt = OptimizerState::new(adam, cfg.lr_h, h.num_params())?;
            (Some(h), Some(opt))
        }
    };
    Ok(ActorCritic {
        opt_policy: OptimizerState::new(adam, cfg.lr_actor, policy.num_params())?,
        opt_v: OptimizerState::new(adam, cfg.lr_critic, v.num_params())?,
        policy: CategoricalPolicy::new(policy),
        v,
        h,
        opt_h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Environment steps so far.
    pub step: u64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// `(global step at episode end, return)`
    pub episodes: Vec<(u64, f64)>,
    pub iterations: Vec<IterationStats>,
    pub steps: u64,
    pub wall_clock_s: f64,
    /// Environment steps per second over collection and learning.
    pub sps: f64,
}

/// Trains for `total_steps / rollout_len` whole iterations. `on_iter` sees
/// every iteration's statistics and all episodes completed so far; returning
/// `false` stops training early.
pub fn train<E, F>(
    cfg: &PpoConfig,
    variant: Variant,
    env: E,
    seed: u64,
    total_steps: u64,
    exec: Exec,
    mut on_iter: F,
) -> Result<TrainReport>
where
    E: Env + 'static,
    F: FnMut(&IterationStats, &[(u64, f64)]) -> Result<bool>,
{
    cfg.validate(variant)?;
    let mut env: Box<dyn Env> = if cfg.normalize_obs {
        Box::new(NormalizeObs::new(env))
    } else {
        Box::new(env)
    };
    let mut init_rng = stream(seed, Stream::Init);
    let mut agent_rng = stream(seed, Stream::Agent);
    let mut batch_rng = stream(seed, Stream::Minibatch);
    let mut ac = build_actor_critic(cfg, variant, env.obs_dim(), env.n_actions(), &mut init_rng)?;
    let mut state = RolloutState::start(&mut env);
    let iterations = (total_steps / cfg.rollout_len as u64) as usize;
    let mut stats = Vec::with_capacity(iterations);
    let start = Instant::now();
    for iteration in 0..iterations {
        // Gradient PPO recomputes every value with the current critic
        let critic = (variant == Variant::Ppo).then_some(&ac.v);
        let buf = collect_rollout(&mut env, &ac.policy, critic, cfg.rollout_len, &mut state, &mut agent_rng)?;
        let diagnostics = match variant {
            Variant::Ppo => {
                let gae = compute_gae(&buf, cfg.gamma, cfg.lambda);
                ppo_update(cfg, &buf, &gae, &mut ac, exec, &mut batch_rng)?
            }
            Variant::GradientPpo => gradient_ppo_update(cfg, &buf, &mut ac, exec, &mut batch_rng)?,
        };
        let s = IterationStats {
            iteration,
            step: state.steps,
            diagnostics,
        };
        stats.push(s);
        if !on_iter(&s, &state.completed)? {
            break;
        }
    }
    let wall_clock_s = start.elapsed().as_secs_f64();
    Ok(TrainReport {
        episodes: state.completed,
        iterations: stats,
        steps: state.steps,
        wall_clock_s,
        sps: state.steps as f64 / wall_clock_s.max(1e-9),
    })
}
