//! Versioned JSON experiment configuration.

use std::path::{Path, PathBuf};

use gradtd::control::ControlConfig;
use gradtd::ppo::{PpoConfig, Variant};
use gradtd::prediction::PredictionConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment id plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    RandomWalk { n_states: usize },
    Boyan,
    Baird,
    Gridworld { size: usize, gamma: f64 },
    CartPole { max_steps: usize },
}

impl EnvConfig {
    pub fn name(&self) -> String {
        match self {
            EnvConfig::RandomWalk { n_states } => format!("random_walk_{n_states}"),
            EnvConfig::Boyan => "boyan".into(),
            EnvConfig::Baird => "baird".into(),
            EnvConfig::Gridworld { size, .. } => format!("gridworld_{size}"),
            EnvConfig::CartPole { .. } => "cart_pole".into(),
        }
    }

    fn is_tabular(&self) -> bool {
        !matches!(self, EnvConfig::CartPole { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoAgentConfig {
    pub variant: Variant,
    pub params: PpoConfig,
}

/// Agent selector; the payload is the algorithm's own configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    Prediction(PredictionConfig),
    Control(ControlConfig),
    Ppo(PpoAgentConfig),
}

impl AgentConfig {
    /// Short label used for output directories and plot legends.
    pub fn label(&self) -> String {
        match self {
            AgentConfig::Prediction(c) => format!("{}_lambda{}", c.algorithm.name(), c.lambda),
            AgentConfig::Control(c) => format!("{}_lambda{}", c.algorithm.name(), c.lambda),
            AgentConfig::Ppo(c) => c.variant.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Budget {
    Steps(u64),
    Episodes(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub budget: Budget,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Metrics are logged every `cadence` environment steps.
    pub cadence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name {:?} must be a nonempty path component", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad(format!("seeds must be distinct: {:?}", self.seeds));
        }
        if self.cadence == 0 {
            return bad("cadence must be ≥ 1".into());
        }
        match (&self.agent, &self.env) {
            (AgentConfig::Prediction(c), env) => {
                c.validate()?;
                if !env.is_tabular() || matches!(env, EnvConfig::Gridworld { .. }) {
                    return bad(format!("prediction needs random_walk, boyan or baird, got {}", env.name()));
                }
                if matches!(env, EnvConfig::Baird) && c.view == gradtd::prediction::View::Forward {
                    return bad("baird is continuing; the forward view needs episodes".into());
                }
            }
            (AgentConfig::Control(c), EnvConfig::Gridworld { .. }) => c.validate()?,
            (AgentConfig::Control(_), env) => return bad(format!("control needs gridworld, got {}", env.name())),
            (AgentConfig::Ppo(c), EnvConfig::CartPole { .. }) => c.params.validate(c.variant)?,
            (AgentConfig::Ppo(_), env) => return bad(format!("ppo needs cart_pole, got {}", env.name())),
        }
        if matches!(self.budget, Budget::Episodes(_)) && matches!(self.env, EnvConfig::Baird) {
            return bad("baird has no episodes; use a step budget".into());
        }
        Ok(())
    }

    /// Output directory for this experiment under `root`.
    pub fn run_dir(&self, root: &Path) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| root.join(&self.name))
    }
}

/// Shipped defaults: PPO and Gradient PPO on cart-pole, QRC(λ) on the grid.
pub fn default_ppo(variant: Variant) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        name: variant.name().into(),
        env: EnvConfig::CartPole { max_steps: 500 },
        agent: AgentConfig::Ppo(PpoAgentConfig {
            variant,
            params: PpoConfig::defaults(variant),
        }),
        budget: Budget::Steps(300_000),
        seeds: (0..5).collect(),
        cadence: 2048,
        output_dir: None,
    }
}

pub fn default_control(algorithm: gradtd::control::ControlAlgorithm) -> ExperimentConfig {
    let mut agent = ControlConfig::defaults(algorithm, 0.99);
    agent.alpha_q = 0.5;
    ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        name: algorithm.name().into(),
        env: EnvConfig::Gridworld { size: 5, gamma: 0.99 },
        agent: AgentConfig::Control(agent),
        budget: Budget::Steps(50_000),
        seeds: (0..30).collect(),
        cadence: 1000,
        output_dir: None,
    }
}
