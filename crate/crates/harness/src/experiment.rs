//! Single-seed experiment drivers producing long-form metric records.
//!
//! Records carry only quantities that are a pure function of (config, seed);
//! wall-clock figures are returned separately so the metrics stay
//! byte-reproducible.

use std::collections::VecDeque;
use std::time::Instant;

use gradtd::approximator::{argmax, Approximator};
use gradtd::control::{self, ControlAgent};
use gradtd::envs::{self, CartPole, FeatureMap, MdpSpec, TabularEnv};
use gradtd::oracle::{self, PolicyTable};
use gradtd::par::Exec;
use gradtd::ppo;
use gradtd::prediction::{LinearAgent, PredictionAgent, PredictionConfig, View};
use gradtd::rng::{stream, Stream};
use gradtd::Transition;

use crate::config::{AgentConfig, Budget, EnvConfig, ExperimentConfig, PpoAgentConfig};
use crate::error::{HarnessError, Result};

/// Episodes averaged by the logged `return` metric.
pub const RETURN_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: u64,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<Record>,
    pub env_steps: u64,
    pub wall_clock_s: f64,
}

impl SeedRun {
    pub fn sps(&self) -> f64 {
        self.env_steps as f64 / self.wall_clock_s.max(1e-9)
    }

    /// `(step, value)` pairs of one metric in logging order.
    pub fn series(&self, metric: &str) -> Vec<(u64, f64)> {
        self.records
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.step, r.value))
            .collect()
    }

    pub fn last(&self, metric: &str) -> Option<f64> {
        self.records.iter().rev().find(|r| r.metric == metric).map(|r| r.value)
    }
}

/// Runs `cfg` for one seed. `exec` controls data parallelism inside the
/// run (PPO minibatches); seeds themselves are parallelised by the caller.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<SeedRun> {
    cfg.validate()?;
    let start = Instant::now();
    let (records, env_steps) = match &cfg.agent {
        AgentConfig::Prediction(p) => run_prediction(cfg, p, seed)?,
        AgentConfig::Control(c) => run_control(cfg, c, seed)?,
        AgentConfig::Ppo(p) => run_ppo(cfg, p, seed, exec)?,
    };
    Ok(SeedRun {
        seed,
        records,
        env_steps,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Exact description of a prediction problem.
#[derive(Debug, Clone)]
pub struct PredictionTask {
    pub mdp: MdpSpec,
    pub features: FeatureMap,
    pub behavior: PolicyTable,
    pub target: PolicyTable,
    /// `v_π` of the target policy.
    pub v_true: Vec<f64>,
    /// State weighting for RMSVE and PBE: the behavior policy's distribution.
    pub d: Vec<f64>,
    /// Auxiliary feature rows spanning the class the PBE projects onto.
    pub h_features: Vec<Vec<f64>>,
    pub initial_weights: Vec<f64>,
}

impl PredictionTask {
    pub fn new(env: &EnvConfig) -> Result<Self> {
        let (mdp, features, behavior, target, initial, tabular_h) = match env {
            EnvConfig::RandomWalk { n_states } => {
                let (mdp, phi) = envs::make_random_walk(*n_states)?;
                let pi = PolicyTable::uniform(mdp.n_states, 1);
                let w = vec![0.0; phi.dim()];
                (mdp, phi, pi.clone(), pi, w, false)
            }
            EnvConfig::Boyan => {
                let (mdp, phi) = envs::make_boyan();
                let pi = PolicyTable::uniform(mdp.n_states, 1);
                let w = vec![0.0; phi.dim()];
                (mdp, phi, pi.clone(), pi, w, false)
            }
            EnvConfig::Baird => {
                let b = envs::make_baird();
                let w = envs::BAIRD_INITIAL_WEIGHTS.to_vec();
                // the eight features span all seven states, so the tabular
                // class is the same projection without a singular Gram matrix
                (b.mdp, b.features, b.behavior, b.target, w, true)
            }
            other => return Err(HarnessError::Config(format!("{} is not a prediction task", other.name()))),
        };
        let v_true = oracle::exact_values(&mdp, &target)?;
        let d = oracle::stationary_distribution(&mdp, &behavior)?;
        let h_features = if tabular_h {
            (0..mdp.n_states)
                .map(|s| (0..mdp.n_states).map(|j| f64::from(u8::from(s == j))).collect())
                .collect()
        } else {
            features.rows().to_vec()
        };
        Ok(PredictionTask {
            mdp,
            features,
            behavior,
            target,
            v_true,
            d,
            h_features,
            initial_weights: initial,
        })
    }

    pub fn rmsve(&self, w: &[f64]) -> Result<f64> {
        let v = oracle::linear_values(&self.features, w)?;
        Ok(oracle::rmsve(&self.d, &v, &self.v_true))
    }

    pub fn pbe(&self, w: &[f64], lambda: f64) -> Result<f64> {
        let v = oracle::linear_values(&self.features, w)?;
        Ok(oracle::exact_pbe_lambda(&self.mdp, &self.target, &self.d, &self.h_features, &v, lambda)?)
    }
}

enum Learner {
    Linear(LinearAgent),
    General(PredictionAgent),
}

impl Learner {
    fn new(cfg: PredictionConfig, w0: Vec<f64>) -> Result<Self> {
        Ok(match cfg.view {
            View::Backward => Learner::Linear(LinearAgent::new(cfg, w0)?),
            View::Forward => {
                let mut v = Approximator::linear(w0.len(), 1);
                v.set_params(&w0)?;
                let h = Approximator::linear(w0.len(), 1);
                Learner::General(PredictionAgent::new(cfg, v, h)?)
            }
        })
    }

    fn weights(&self) -> &[f64] {
        match self {
            Learner::Linear(a) => &a.w,
            Learner::General(a) => a.v.params().as_slice(),
        }
    }

    fn step(&mut self, x: &[f64], reward: f64, x_next: &[f64], terminal: bool, rho: f64) -> Result<()> {
        match self {
            Learner::Linear(a) => a.step(x, reward, x_next, terminal, rho)?,
            Learner::General(a) => {
                let tr = Transition::new(x.to_vec(), 0, reward, x_next.to_vec(), terminal);
                a.observe(tr, rho)?;
            }
        }
        Ok(())
    }
}

fn run_prediction(cfg: &ExperimentConfig, p: &PredictionConfig, seed: u64) -> Result<(Vec<Record>, u64)> {
    let task = PredictionTask::new(&cfg.env)?;
    if p.gamma != task.mdp.gamma {
        return Err(HarnessError::Config(format!(
            "agent gamma {} differs from the environment's {}",
            p.gamma, task.mdp.gamma
        )));
    }
    let mut learner = Learner::new(*p, task.initial_weights.clone())?;
    let mut env = TabularEnv::new(task.mdp.clone(), task.features.clone(), stream(seed, Stream::Env))?;
    let mut agent_rng = stream(seed, Stream::Agent);
    let mut records = Vec::new();
    let log = |records: &mut Vec<Record>, at: u64, w: &[f64]| -> Result<()> {
        records.push(Record { step: at, metric: "rmsve", value: task.rmsve(w)? });
        records.push(Record { step: at, metric: "pbe", value: task.pbe(w, p.lambda)? });
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        records.push(Record { step: at, metric: "weight_norm", value: norm });
        Ok(())
    };
    log(&mut records, 0, learner.weights())?;
    // the logging clock counts steps or episodes, following the budget
    let (limit, by_episode) = match cfg.budget {
        Budget::Steps(n) => (n, false),
        Budget::Episodes(n) => (n, true),
    };
    let (mut steps, mut episodes) = (0u64, 0u64);
    let mut s = env.reset_index();
    while (if by_episode { episodes } else { steps }) < limit {
        let a = task.behavior.sample(s, &mut agent_rng);
        let rho = task.target.prob(s, a) / task.behavior.prob(s, a);
        let (next, reward, terminal, _) = env.step_index(a)?;
        learner.step(task.features.features(s), reward, task.features.features(next), terminal, rho)?;
        steps += 1;
        let mut clock_ticked = !by_episode;
        if terminal {
            episodes += 1;
            clock_ticked = true;
            s = env.reset_index();
        } else {
            s = next;
        }
        let clock = if by_episode { episodes } else { steps };
        if clock_ticked && (clock % cfg.cadence == 0 || clock == limit) {
            log(&mut records, clock, learner.weights())?;
        }
    }
    Ok((records, steps))
}

fn run_control(cfg: &ExperimentConfig, c: &gradtd::control::ControlConfig, seed: u64) -> Result<(Vec<Record>, u64)> {
    let EnvConfig::Gridworld { size, gamma } = cfg.env else {
        return Err(HarnessError::Config("control runs on the gridworld".into()));
    };
    let Budget::Steps(total) = cfg.budget else {
        return Err(HarnessError::Config("control uses a step budget".into()));
    };
    let (mdp, phi) = envs::make_gridworld(size, gamma)?;
    let q_star = oracle::optimal_action_values(&mdp, 1e-12, 100_000)?;
    let best = oracle::optimal_actions(&q_star, 1e-9);
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let mut agent = ControlAgent::new(*c, Approximator::tabular(n_states, n_actions), Approximator::tabular(n_states, n_actions))?;
    let mut env = TabularEnv::new(mdp.clone(), phi.clone(), stream(seed, Stream::Env))?;
    let mut rng = stream(seed, Stream::Agent);
    let greedy_is_optimal = |q: &Approximator| -> gradtd::Result<bool> {
        for s in (0..n_states).filter(|s| !mdp.is_terminal(*s)) {
            if !best[s].contains(&argmax(&q.action_values(phi.features(s))?)) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut records = Vec::new();
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(RETURN_WINDOW);
    control::train(&mut env, &mut agent, total, &mut rng, |info, agent| {
        if let Some(g) = info.episode_return {
            if recent.len() == RETURN_WINDOW {
                recent.pop_front();
            }
            recent.push_back(g);
        }
        if info.step % cfg.cadence == 0 || info.step == total {
            records.push(Record { step: info.step, metric: "return", value: mean_or_nan(&recent) });
            records.push(Record { step: info.step, metric: "epsilon", value: info.epsilon });
            let optimal = greedy_is_optimal(&agent.q)?;
            records.push(Record { step: info.step, metric: "greedy_optimal", value: f64::from(u8::from(optimal)) });
        }
        Ok(())
    })?;
    let mut eval_env = TabularEnv::new(mdp.clone(), phi.clone(), stream(seed, Stream::Eval))?;
    let greedy = control::evaluate_greedy(&mut eval_env, &agent.q, 10 * n_states)?;
    records.push(Record { step: total, metric: "greedy_return", value: greedy });
    Ok((records, total))
}

fn run_ppo(cfg: &ExperimentConfig, p: &PpoAgentConfig, seed: u64, exec: Exec) -> Result<(Vec<Record>, u64)> {
    let EnvConfig::CartPole { max_steps } = cfg.env else {
        return Err(HarnessError::Config("ppo runs on cart_pole".into()));
    };
    let Budget::Steps(total) = cfg.budget else {
        return Err(HarnessError::Config("ppo uses a step budget".into()));
    };
    let env = CartPole::new(stream(seed, Stream::Env)).with_max_steps(max_steps);
    let mut records = Vec::new();
    let mut last_bucket = 0;
    let report = ppo::train(&p.params, p.variant, env, seed, total, exec, |stats, episodes| {
        let bucket = stats.step / cfg.cadence;
        if bucket > last_bucket {
            last_bucket = bucket;
            let tail = &episodes[episodes.len().saturating_sub(RETURN_WINDOW)..];
            let returns: Vec<f64> = tail.iter().map(|e| e.1).collect();
            let d = &stats.diagnostics;
            let step = stats.step;
            records.push(Record { step, metric: "return", value: mean_or_nan(&returns) });
            records.push(Record { step, metric: "policy_loss", value: d.policy_loss });
            records.push(Record { step, metric: "value_loss", value: d.value_loss });
            records.push(Record { step, metric: "entropy", value: d.entropy });
            records.push(Record { step, metric: "approx_kl", value: d.approx_kl });
            records.push(Record { step, metric: "clip_fraction", value: d.clip_fraction });
        }
        Ok(true)
    })?;
    Ok((records, report.steps))
}

fn mean_or_nan<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
