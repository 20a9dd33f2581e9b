//! Desk-scale environments.
//!
//! Tabular problems are described by an exact [`MdpSpec`] so the oracle
//! module can compute ground truth for them; [`TabularEnv`] samples from a
//! spec under a fixed policy or under agent-chosen actions. [`CartPole`] is a
//! small continuous-state simulator for actor-critic experiments.

mod cartpole;
mod mdp;
mod normalize;
mod tabular;

pub use cartpole::{CartPole, CartPoleState};
pub(crate) use mdp::sample_index;
pub use mdp::{FeatureKind, FeatureMap, MdpSpec, TabularEnv, MDP_SCHEMA_VERSION};
pub use normalize::{NormalizeObs, RunningMeanStd};
pub use tabular::{
    make_baird, make_boyan, make_gridworld, make_random_mdp, make_random_walk, Baird, BAIRD_ACTION_DASHED,
    BAIRD_ACTION_SOLID, BAIRD_INITIAL_WEIGHTS,
};

use crate::error::Result;

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// The episode reached a terminal state; no bootstrapping past this step.
    pub terminal: bool,
    /// The episode was cut by a time limit.
    pub truncated: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Step/reset interface. Environments own their random stream, so a fixed
/// seed and action sequence always reproduce the same observations.
pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

impl<E: Env + ?Sized> Env for Box<E> {
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<EnvStep> {
        (**self).step(action)
    }
}
