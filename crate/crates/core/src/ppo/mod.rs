//! PPO and Gradient PPO with a categorical policy.
//!
//! Baseline PPO fits the critic to stale λ-return targets computed once per
//! rollout. Gradient PPO splits the rollout into contiguous sequences,
//! recomputes TD(λ) errors with the current critic for every minibatch,
//! trains the critic and an auxiliary `ĥ` network with direct TDRC(λ)
//! updates, and uses the recomputed errors as policy advantages.

mod buffer;
pub mod critic;
mod policy;
mod trainer;
mod update;

pub use buffer::{collect_rollout, compute_gae, normalize, Gae, RolloutBuffer, RolloutState};
pub use policy::{
    entropy, entropy_grad_logits, log_prob_from_logits, log_prob_grad_logits, softmax, CategoricalPolicy,
};
pub use trainer::{build_actor_critic, train, IterationStats, TrainReport};
pub use update::{gradient_ppo_update, ppo_update, ActorCritic, Diagnostics};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ppo,
    GradientPpo,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ppo => "ppo",
            Variant::GradientPpo => "gradient_ppo",
        }
    }
}

/// How Gradient PPO forms the critic update.
///
/// Both produce the same `Δw`. `Recursive` materialises `∇δ^λ_t` for every
/// step by the backward recursion; `Adjoint` folds the recursion into one
/// scalar weight per state and needs a single backward pass per state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticGradient {
    Recursive,
    #[default]
    Adjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub rollout_len: usize,
    pub epochs: usize,
    /// Samples per minibatch; for Gradient PPO a multiple of `seq_len`.
    pub minibatch_size: usize,
    /// Sequence length `T` (Gradient PPO only).
    pub seq_len: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    /// Value-loss weight (PPO only).
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// `ĥ` step size (Gradient PPO only).
    pub lr_h: f64,
    /// Regularisation of `ĥ` (Gradient PPO only).
    pub beta: f64,
    pub adam_eps: f64,
    pub hidden: Vec<usize>,
    pub normalize_obs: bool,
    pub normalize_advantages: bool,
    /// PPO only; Gradient PPO never clips the critic.
    pub clip_value_loss: bool,
    #[serde(default)]
    pub critic_gradient: CriticGradient,
}

impl PpoConfig {
    /// Baseline PPO defaults.
    pub fn ppo() -> Self {
        PpoConfig {
            rollout_len: 2048,
            epochs: 4,
            minibatch_size: 64,
            seq_len: 1,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_h: 3e-4,
            beta: 0.0,
            adam_eps: 1e-5,
            hidden: vec![64, 64],
            normalize_obs: true,
            normalize_advantages: true,
            clip_value_loss: true,
            critic_gradient: CriticGradient::default(),
        }
    }

    /// Gradient PPO defaults: minibatches of 8 sequences of length 32,
    /// critic and `ĥ` step size 3e-3, β = 1.
    pub fn gradient_ppo() -> Self {
        PpoConfig {
            minibatch_size: 256,
            seq_len: 32,
            lr_critic: 3e-3,
            lr_h: 3e-3,
            beta: 1.0,
            clip_value_loss: false,
            ..PpoConfig::ppo()
        }
    }

    pub fn defaults(variant: Variant) -> Self {
        match variant {
            Variant::Ppo => PpoConfig::ppo(),
            Variant::GradientPpo => PpoConfig::gradient_ppo(),
        }
    }

    pub fn validate(&self, variant: Variant) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.rollout_len == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("rollout length, epochs and minibatch size must be ≥ 1".into());
        }
        if self.rollout_len % self.minibatch_size != 0 {
            return bad(format!(
                "rollout length {} not divisible by minibatch size {}",
                self.rollout_len, self.minibatch_size
            ));
        }
        if variant == Variant::GradientPpo
            && (self.seq_len == 0 || self.minibatch_size % self.seq_len != 0 || self.rollout_len % self.seq_len != 0)
        {
            return bad(format!(
                "sequence length {} must divide the minibatch size {} and rollout length {}",
                self.seq_len, self.minibatch_size, self.rollout_len
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]".into());
        }
        if !(self.clip > 0.0 && self.max_grad_norm > 0.0 && self.adam_eps > 0.0) {
            return bad("clip, max_grad_norm and adam_eps must be > 0".into());
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0 && self.lr_h > 0.0) || self.beta < 0.0 {
            return bad("step sizes must be > 0 and beta ≥ 0".into());
        }
        Ok(())
    }
}
