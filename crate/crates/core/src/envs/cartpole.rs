use rand::Rng as _;

use super::{Env, EnvStep};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// `[x, ẋ, θ, θ̇]`
pub type CartPoleState = [f64; 4];

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
pub(crate) const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_THRESHOLD: f64 = 2.4;

/// Classic pole balancing: two actions (push left, push right), +1 reward
/// per step, termination when the pole passes ±12° or the cart leaves
/// ±2.4, and truncation after `max_steps` (500 by default).
#[derive(Debug, Clone)]
pub struct CartPole {
    state: CartPoleState,
    steps: usize,
    max_steps: usize,
    rng: Rng,
}

impl CartPole {
    pub fn new(rng: Rng) -> Self {
        let mut env = CartPole {
            state: [0.0; 4],
            steps: 0,
            max_steps: 500,
            rng,
        };
        env.reset();
        env
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// One explicit-Euler step of the cart-pole equations under `force`.
    pub fn dynamics(state: CartPoleState, force: f64) -> CartPoleState {
        let [x, x_dot, theta, theta_dot] = state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }

    pub fn is_failed(state: &CartPoleState) -> bool {
        state[0].abs() > X_THRESHOLD || state[2].abs() > THETA_THRESHOLD
    }
}

impl Env for CartPole {
    fn obs_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = self.rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let force = match action {
            0 => -FORCE_MAG,
            1 => FORCE_MAG,
            _ => {
                return Err(Error::EnvStep {
                    step: self.steps,
                    reason: format!("action {action} out of range"),
                })
            }
        };
        self.state = Self::dynamics(self.state, force);
        self.steps += 1;
        let terminal = Self::is_failed(&self.state);
        Ok(EnvStep {
            obs: self.state.to_vec(),
            reward: 1.0,
            terminal,
            truncated: !terminal && self.steps >= self.max_steps,
        })
    }
}
