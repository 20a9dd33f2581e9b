//! Gradient TD(λ) methods for prediction and control.
//!
//! The crate provides forward- and backward-view GTD2(λ), TDC(λ) and TDRC(λ)
//! for state-value prediction, the QRC(λ) family for control, PPO and
//! Gradient PPO (PPO whose critic is trained with TDRC(λ)), a set of small
//! environments, and exact oracles on tabular MDPs used to check all of the
//! above.
//!
//! Every update is expressed on flat `f64` parameter vectors so that
//! eligibility traces are plain vector recurrences over the whole parameter
//! set. Function approximators compute their own gradients; there is no
//! dependency on an autodiff framework.

pub mod approximator;
pub mod control;
pub mod envs;
pub mod error;
pub mod optim;
pub mod oracle;
pub mod par;
pub mod param;
pub mod ppo;
pub mod prediction;
pub mod returns;
pub mod rng;

pub use approximator::{Activation, ApproxKind, Approximator, TdMode};
pub use error::{Error, Result};
pub use optim::{clip_global_norm, Direction, OptimizerKind, OptimizerState};
pub use param::{Gradient, Layout, ParamVector, Segment};
pub use returns::{Trajectory, Transition};
