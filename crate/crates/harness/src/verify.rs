//! Invariant suite behind `gradtd verify`.
//!
//! Each check compares two independently computed quantities (or one
//! against a bound) and records the tolerance and the observed error.

use std::fmt;
use std::str::FromStr;

use gradtd::approximator::{Activation, Approximator, TdMode};
use gradtd::envs::{make_random_mdp, MdpSpec};
use gradtd::oracle::{self, PolicyTable};
use gradtd::ppo::{self, critic};
use gradtd::prediction::{self, Algorithm, PredictionConfig, TraceState, Update, View};
use gradtd::rng::{stream, Rng, Stream};
use gradtd::{Trajectory, Transition};
use rand::Rng as _;
use serde::Serialize;

use crate::config::{AgentConfig, Budget, EnvConfig, ExperimentConfig, CONFIG_SCHEMA_VERSION};
use crate::error::{HarnessError, Result};
use crate::experiment::run_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Pass when `observed ≤ tolerance`.
    AtMost,
    /// Pass when `observed ≥ tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub group: Group,
    pub name: String,
    pub bound: Bound,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(group: Group, name: impl Into<String>, bound: Bound, tolerance: f64, observed: f64) -> Self {
        let passed = match bound {
            Bound::AtMost => observed <= tolerance,
            Bound::AtLeast => observed >= tolerance,
        };
        Check {
            group,
            name: name.into(),
            bound,
            tolerance,
            observed,
            passed,
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(
            f,
            "[{}] {:<12} {}: observed {:.3e} {op} {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.group.name(),
            self.name,
            self.observed,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Gradients,
    Equivalence,
    Oracle,
    Baird,
    Losses,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Gradients, Group::Equivalence, Group::Oracle, Group::Baird, Group::Losses];

    pub fn name(self) -> &'static str {
        match self {
            Group::Gradients => "gradients",
            Group::Equivalence => "equivalence",
            Group::Oracle => "oracle",
            Group::Baird => "baird",
            Group::Losses => "losses",
        }
    }

    pub fn run(self) -> Result<Vec<Check>> {
        match self {
            Group::Gradients => gradients(),
            Group::Equivalence => equivalence(100),
            Group::Oracle => oracle_checks(20),
            Group::Baird => baird(&BairdSettings::default()),
            Group::Losses => losses(),
        }
    }
}

impl FromStr for Group {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown verify group {s:?}; expected one of gradients, equivalence, oracle, baird, losses, all")))
    }
}

/// Groups named by a selector: one group name or `all`.
pub fn select(selector: &str) -> Result<Vec<Group>> {
    if selector == "all" {
        Ok(Group::ALL.to_vec())
    } else {
        Ok(vec![selector.parse()?])
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "compared vectors differ in length");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max|a − b| / max(1, max|b|)`.
fn scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    max_abs_diff(a, b) / scale
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_params(a: &mut Approximator, rng: &mut Rng, scale: f64) {
    let p: Vec<f64> = (0..a.num_params()).map(|_| uniform(rng, -scale, scale)).collect();
    a.set_params(&p).expect("finite parameters");
}

fn random_features(n_states: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n_states).map(|_| (0..dim).map(|_| uniform(rng, -1.0, 1.0)).collect()).collect()
}

fn sample(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// An episode of at most `max_len` uniform-random steps on `mdp`, observed
/// through `features`; the final step is marked terminal.
fn random_episode(mdp: &MdpSpec, features: &[Vec<f64>], max_len: usize, rng: &mut Rng) -> Trajectory {
    let len = rng.random_range(1..=max_len);
    let mut s = rng.random_range(0..mdp.n_states);
    let mut trs = Vec::with_capacity(len);
    for t in 0..len {
        let a = rng.random_range(0..mdp.n_actions);
        let next = sample(&mdp.transitions[s][a], rng);
        let r = mdp.rewards[s][a][next];
        trs.push(Transition::new(features[s].clone(), a, r, features[next].clone(), t + 1 == len));
        s = next;
    }
    Trajectory::new(trs, 0.0).expect("episode is contiguous")
}

/// A trajectory with several episode boundaries and a bootstrapped tail.
fn random_trajectory(features: &[Vec<f64>], len: usize, rng: &mut Rng) -> Vec<Transition> {
    let mut s = rng.random_range(0..features.len());
    (0..len)
        .map(|t| {
            let next = rng.random_range(0..features.len());
            let terminal = t + 1 < len && rng.random::<f64>() < 0.15;
            let tr = Transition::new(features[s].clone(), 0, uniform(rng, -1.0, 1.0), features[next].clone(), terminal);
            s = if terminal { rng.random_range(0..features.len()) } else { next };
            tr
        })
        .collect()
}

fn relink(mut trs: Vec<Transition>) -> Vec<Transition> {
    for i in 1..trs.len() {
        if !trs[i - 1].terminal {
            trs[i].state = trs[i - 1].next_state.clone();
        }
    }
    trs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxFamily {
    Linear,
    Mlp,
}

fn make_approx(family: ApproxFamily, dim: usize, rng: &mut Rng) -> Approximator {
    match family {
        ApproxFamily::Linear => {
            let mut a = Approximator::linear(dim, 1);
            random_params(&mut a, rng, 1.0);
            a
        }
        ApproxFamily::Mlp => Approximator::mlp(dim, &[8], 1, Activation::Tanh, 1.0, rng),
    }
}

/// Sum of backward-view updates over an episode starting from zero traces.
pub fn backward_total(cfg: &PredictionConfig, traj: &Trajectory, ratios: &[f64], v: &Approximator, h: &Approximator) -> Result<Update> {
    let mut traces = TraceState::zeros(v.num_params(), h.num_params());
    let mut total = Update::zeros(v.num_params(), h.num_params());
    for (tr, rho) in traj.transitions().iter().zip(ratios) {
        total.add(&prediction::backward_step(cfg, tr, *rho, &mut traces, v, h)?);
    }
    Ok(total)
}

/// Forward vs backward total updates with frozen parameters: every
/// algorithm × λ × IS mode × approximator family over `episodes` random
/// episodes of length ≤ 20 on random 10-state MDPs.
pub fn equivalence(episodes: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut combo = 0u64;
    for alg in [Algorithm::Gtd2, Algorithm::Tdc, Algorithm::Tdrc] {
        for lambda in [0.0, 0.5, 0.9, 1.0] {
            for use_is in [false, true] {
                for family in [ApproxFamily::Linear, ApproxFamily::Mlp] {
                    combo += 1;
                    let mut rng = stream(1000 + combo, Stream::Data);
                    let mut worst = 0.0f64;
                    for e in 0..episodes {
                        let mdp = make_random_mdp(10, 2, 0.9, combo * 10_000 + e as u64)?;
                        let features = random_features(10, 4, &mut rng);
                        let traj = random_episode(&mdp, &features, 20, &mut rng);
                        let ratios: Vec<f64> = (0..traj.len())
                            .map(|_| if use_is { uniform(&mut rng, 0.1, 2.0) } else { 1.0 })
                            .collect();
                        let v = make_approx(family, 4, &mut rng);
                        let h = make_approx(family, 4, &mut rng);
                        let mut cfg = PredictionConfig::new(alg, View::Forward, lambda, mdp.gamma, 0.1);
                        cfg.use_is = use_is;
                        let fwd = prediction::forward_update(&cfg, &traj, &v, &h, Some(&ratios))?;
                        let bwd = backward_total(&cfg, &traj, &ratios, &v, &h)?;
                        worst = worst
                            .max(max_abs_diff(fwd.dw.0.as_slice(), bwd.dw.0.as_slice()))
                            .max(max_abs_diff(fwd.dtheta.0.as_slice(), bwd.dtheta.0.as_slice()));
                    }
                    let name = format!(
                        "{} lambda={lambda} {} {:?}: max |forward - backward| over {episodes} episodes",
                        alg.name(),
                        if use_is { "rho~U[0.1,2]" } else { "rho=1" },
                        family
                    );
                    checks.push(Check::new(Group::Equivalence, name, Bound::AtMost, 1e-9, worst));
                }
            }
        }
    }
    Ok(checks)
}

/// Central finite-difference gradient of `f` at `x`.
fn finite_difference(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn approx_fd_error(approx: &Approximator, inputs: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    let params = approx.params().as_slice().to_vec();
    for x in inputs {
        for head in 0..approx.outputs() {
            let (_, g) = approx.output_and_grad(x, head)?;
            let mut probe = approx.clone();
            let fd = finite_difference(&params, 1e-6, |p| {
                probe.set_params(p).expect("finite");
                probe.forward(x).expect("valid input")[head]
            });
            worst = worst.max(scaled_diff(g.0.as_slice(), &fd));
        }
    }
    Ok(worst)
}

/// Brute-force `δ^λ_t = Σ_k (γλ)^k (Π_{i≤k} ρ_{t+i}) δ_{t+k}` up to the
/// episode end, and the same sum over per-step `∇δ`.
pub fn brute_force_td_lambda(
    trs: &[Transition],
    v: &Approximator,
    gamma: f64,
    lambda: f64,
    ratios: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = trs.len();
    let deltas: Vec<f64> = trs.iter().map(|t| v.td_error(t, gamma, TdMode::StateValue)).collect::<gradtd::Result<_>>()?;
    let grads: Vec<Vec<f64>> = trs
        .iter()
        .map(|t| v.grad_td_error(t, gamma, TdMode::StateValue).map(|g| g.0.as_slice().to_vec()))
        .collect::<gradtd::Result<_>>()?;
    let mut errors = vec![0.0; n];
    let mut error_grads = vec![vec![0.0; v.num_params()]; n];
    for t in 0..n {
        let mut weight = 1.0;
        for k in t..n {
            weight *= ratios[k];
            errors[t] += weight * deltas[k];
            for (acc, g) in error_grads[t].iter_mut().zip(&grads[k]) {
                *acc += weight * g;
            }
            if trs[k].terminal {
                break;
            }
            weight *= gamma * lambda;
        }
    }
    Ok((errors, error_grads))
}

pub fn gradients() -> Result<Vec<Check>> {
    let g = Group::Gradients;
    let mut rng = stream(7, Stream::Data);
    let mut checks = Vec::new();
    let inputs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| uniform(&mut rng, -1.5, 1.5)).collect()).collect();

    let mut tab = Approximator::tabular(4, 3);
    random_params(&mut tab, &mut rng, 1.0);
    let one_hot: Vec<Vec<f64>> = (0..4).map(|s| (0..4).map(|j| f64::from(u8::from(s == j))).collect()).collect();
    checks.push(Check::new(g, "tabular: analytic vs finite-difference gradient (relative)", Bound::AtMost, 1e-5, approx_fd_error(&tab, &one_hot)?));

    let mut lin = Approximator::linear(4, 3);
    random_params(&mut lin, &mut rng, 1.0);
    checks.push(Check::new(g, "linear: analytic vs finite-difference gradient (relative)", Bound::AtMost, 1e-5, approx_fd_error(&lin, &inputs)?));

    for act in [Activation::Tanh, Activation::Relu] {
        let mlp = Approximator::mlp(4, &[16, 8], 2, act, 1.0, &mut rng);
        let name = format!("mlp {act:?}: analytic vs finite-difference gradient (relative)");
        checks.push(Check::new(g, name, Bound::AtMost, 1e-5, approx_fd_error(&mlp, &inputs)?));
    }

    // categorical policy: ∇ log π and ∇ entropy with respect to logits
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let logits: Vec<f64> = (0..4).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let probs = ppo::softmax(&logits);
        for a in 0..4 {
            let fd = finite_difference(&logits, 1e-6, |l| ppo::log_prob_from_logits(l, a));
            worst = worst.max(scaled_diff(&ppo::log_prob_grad_logits(&probs, a), &fd));
        }
        let fd = finite_difference(&logits, 1e-6, |l| ppo::entropy(&ppo::softmax(l)));
        worst = worst.max(scaled_diff(&ppo::entropy_grad_logits(&probs), &fd));
    }
    checks.push(Check::new(g, "policy: log-prob and entropy logit gradients vs finite differences", Bound::AtMost, 1e-5, worst));

    // δ^λ and ∇δ^λ: recursion vs explicit sums, and ∇δ^λ vs finite differences
    let features = random_features(6, 4, &mut rng);
    let (mut rec_err, mut rec_grad, mut fd_err) = (0.0f64, 0.0f64, 0.0f64);
    for lambda in [0.0, 0.5, 0.9, 1.0] {
        let v = Approximator::mlp(4, &[8], 1, Activation::Tanh, 1.0, &mut rng);
        let trs = relink(random_trajectory(&features, 25, &mut rng));
        let ratios: Vec<f64> = (0..trs.len()).map(|_| uniform(&mut rng, 0.1, 2.0)).collect();
        let traj = Trajectory::new(trs.clone(), 0.0)?;
        let rec = gradtd::returns::td_lambda_error_and_grad(&traj, &v, 0.95, lambda, Some(&ratios))?;
        let (errors, grads) = brute_force_td_lambda(&trs, &v, 0.95, lambda, &ratios)?;
        rec_err = rec_err.max(scaled_diff(&rec.errors, &errors));
        for t in 0..trs.len() {
            rec_grad = rec_grad.max(scaled_diff(rec.error_grads[t].0.as_slice(), &grads[t]));
        }
        let params = v.params().as_slice().to_vec();
        let mut probe = v.clone();
        for t in [0, trs.len() / 2] {
            let fd = finite_difference(&params, 1e-6, |p| {
                probe.set_params(p).expect("finite");
                let r = gradtd::returns::td_lambda_error_and_grad(&traj, &probe, 0.95, lambda, Some(&ratios)).expect("valid");
                r.errors[t]
            });
            fd_err = fd_err.max(scaled_diff(rec.error_grads[t].0.as_slice(), &fd));
        }
    }
    checks.push(Check::new(g, "TD(lambda) error: recursion vs explicit IS-weighted sum", Bound::AtMost, 1e-10, rec_err));
    checks.push(Check::new(g, "grad TD(lambda) error: recursion vs explicit sum of grad deltas", Bound::AtMost, 1e-10, rec_grad));
    checks.push(Check::new(g, "grad TD(lambda) error vs finite differences (relative)", Bound::AtMost, 1e-5, fd_err));
    Ok(checks)
}

/// `δ̄ = r_π + γ P_π v̂ − v̂` straight from the MDP arrays.
fn expected_td_error_direct(mdp: &MdpSpec, pi: &PolicyTable, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states)
        .map(|s| {
            if mdp.is_terminal(s) {
                return 0.0;
            }
            let mut acc = 0.0;
            for a in 0..mdp.n_actions {
                for t in 0..mdp.n_states {
                    let p = pi.prob(s, a) * mdp.transitions[s][a][t];
                    let next = if mdp.is_terminal(t) { 0.0 } else { v[t] };
                    acc += p * (mdp.rewards[s][a][t] + mdp.gamma * next);
                }
            }
            acc - v[s]
        })
        .collect()
}

/// PBE by series expansion of `δ^λ` and coordinate ascent on the inner
/// maximisation `max_θ Σ_s d(s) (2 δ^λ(s) ψ(s)ᵀθ − (ψ(s)ᵀθ)²)`.
pub fn pbe_by_inner_maximisation(
    mdp: &MdpSpec,
    pi: &PolicyTable,
    d: &[f64],
    psi: &[Vec<f64>],
    v: &[f64],
    lambda: f64,
) -> f64 {
    let n = mdp.n_states;
    let p_pi: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            (0..n)
                .map(|t| {
                    if mdp.is_terminal(s) || mdp.is_terminal(t) {
                        0.0
                    } else {
                        (0..mdp.n_actions).map(|a| pi.prob(s, a) * mdp.transitions[s][a][t]).sum()
                    }
                })
                .collect()
        })
        .collect();
    // δ^λ = Σ_k (γλ P)^k δ̄
    let mut term = expected_td_error_direct(mdp, pi, v);
    let mut err = term.clone();
    let gl = mdp.gamma * lambda;
    for _ in 0..20_000 {
        term = (0..n).map(|s| gl * (0..n).map(|t| p_pi[s][t] * term[t]).sum::<f64>()).collect();
        for (e, t) in err.iter_mut().zip(&term) {
            *e += t;
        }
        if term.iter().all(|t| t.abs() < 1e-18) {
            break;
        }
    }
    let k = psi[0].len();
    let mut theta = vec![0.0; k];
    let h = |theta: &[f64], s: usize| -> f64 { psi[s].iter().zip(theta).map(|(a, b)| a * b).sum() };
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for j in 0..k {
            // ∂/∂θ_j = 2 Σ_s d ψ_j (δ^λ − h); exact line maximisation in θ_j
            let num: f64 = (0..n).map(|s| d[s] * psi[s][j] * (err[s] - h(&theta, s))).sum();
            let den: f64 = (0..n).map(|s| d[s] * psi[s][j] * psi[s][j]).sum();
            if den > 0.0 {
                let step = num / den;
                theta[j] += step;
                change = change.max(step.abs());
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    (0..n).map(|s| d[s] * (2.0 * err[s] * h(&theta, s) - h(&theta, s).powi(2))).sum()
}

fn random_policy(n_states: usize, n_actions: usize, rng: &mut Rng) -> PolicyTable {
    let rows = (0..n_states)
        .map(|_| {
            let raw: Vec<f64> = (0..n_actions).map(|_| uniform(rng, 0.05, 1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let residual = 1.0 - row.iter().sum::<f64>();
            row[0] += residual;
            row
        })
        .collect();
    PolicyTable::new(rows).expect("rows are distributions")
}

pub fn oracle_checks(instances: usize) -> Result<Vec<Check>> {
    let g = Group::Oracle;
    let mut rng = stream(11, Stream::Data);
    let lambdas = [0.0, 0.5, 0.9, 1.0];
    let mut worst = 0.0f64;
    for i in 0..instances {
        let n = rng.random_range(4..=8);
        let mdp = make_random_mdp(n, 2, 0.9, 500 + i as u64)?;
        let pi = random_policy(n, 2, &mut rng);
        let k = n - 2;
        let phi = random_features(n, k, &mut rng);
        let w: Vec<f64> = (0..k).map(|_| uniform(&mut rng, -2.0, 2.0)).collect();
        let v: Vec<f64> = phi.iter().map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let lambda = lambdas[i % lambdas.len()];
        let d = oracle::stationary_distribution(&mdp, &pi)?;
        let closed = oracle::exact_pbe_lambda(&mdp, &pi, &d, &phi, &v, lambda)?;
        let numeric = pbe_by_inner_maximisation(&mdp, &pi, &d, &phi, &v, lambda);
        worst = worst.max((closed - numeric).abs() / closed.abs().max(1.0));
    }
    let mut checks = vec![Check::new(
        g,
        format!("closed-form PBE vs inner maximisation on {instances} random instances (relative)"),
        Bound::AtMost,
        1e-6,
        worst,
    )];
    let mut at_truth = 0.0f64;
    for (i, lambda) in lambdas.iter().enumerate() {
        let mdp = make_random_mdp(6, 2, 0.9, 900 + i as u64)?;
        let pi = random_policy(6, 2, &mut rng);
        let v = oracle::exact_values(&mdp, &pi)?;
        let d = oracle::stationary_distribution(&mdp, &pi)?;
        let eye: Vec<Vec<f64>> = (0..6).map(|s| (0..6).map(|j| f64::from(u8::from(s == j))).collect()).collect();
        at_truth = at_truth.max(oracle::exact_pbe_lambda(&mdp, &pi, &d, &eye, &v, *lambda)?);
    }
    checks.push(Check::new(g, "PBE(v_pi, lambda) with tabular features, lambda in {0,0.5,0.9,1}", Bound::AtMost, 1e-12, at_truth));
    Ok(checks)
}

/// Step sizes and horizons of the off-policy Baird runs.
#[derive(Debug, Clone)]
pub struct BairdSettings {
    pub seeds: Vec<u64>,
    pub td_alpha: f64,
    pub td_steps: u64,
    pub td_norm: f64,
    pub gradient_alpha_w: f64,
    pub gradient_alpha_theta: f64,
    pub tdrc_beta: f64,
    pub gradient_steps: u64,
    pub pbe_target: f64,
    pub cadence: u64,
}

impl Default for BairdSettings {
    fn default() -> Self {
        BairdSettings {
            seeds: (0..10).collect(),
            td_alpha: 0.01,
            td_steps: 5_000,
            td_norm: 1e3,
            gradient_alpha_w: 0.005,
            gradient_alpha_theta: 0.05,
            tdrc_beta: 0.01,
            gradient_steps: 50_000,
            pbe_target: 1e-4,
            cadence: 100,
        }
    }
}

/// Config for an off-policy Baird run with importance sampling.
pub fn baird_config(alg: Algorithm, alpha_w: f64, alpha_theta: f64, beta: f64, steps: u64, cadence: u64) -> ExperimentConfig {
    let mut agent = PredictionConfig::new(alg, View::Backward, 0.0, 0.99, alpha_w);
    agent.alpha_theta = Some(alpha_theta);
    agent.beta = beta;
    agent.use_is = true;
    ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        name: format!("baird_{}", alg.name()),
        env: EnvConfig::Baird,
        agent: AgentConfig::Prediction(agent),
        budget: Budget::Steps(steps),
        seeds: vec![0],
        cadence,
        output_dir: None,
    }
}

/// First logged step at which `metric` satisfies `pred`.
fn first_step(records: &[(u64, f64)], pred: impl Fn(f64) -> bool) -> Option<u64> {
    records.iter().find(|p| pred(p.1)).map(|p| p.0)
}

pub fn baird(s: &BairdSettings) -> Result<Vec<Check>> {
    let g = Group::Baird;
    let n = s.seeds.len() as f64;
    let mut checks = Vec::new();

    let td = baird_config(Algorithm::Td, s.td_alpha, s.td_alpha, 0.0, s.td_steps, s.cadence);
    let mut hits = Vec::new();
    for seed in &s.seeds {
        let run = run_seed(&td, *seed, gradtd::par::Exec::Sequential);
        // a run that overflowed has certainly passed the norm bound
        let hit = match run {
            Ok(r) => first_step(&r.series("weight_norm"), |x| x > s.td_norm),
            Err(HarnessError::Core(gradtd::Error::NonFinite { .. })) => Some(s.td_steps),
            Err(e) => return Err(e),
        };
        hits.push(hit);
    }
    let passed = hits.iter().filter(|h| h.is_some()).count() as f64;
    checks.push(
        Check::new(
            g,
            format!("TD(0) off-policy: seeds with |w| > {:.0e} within {} steps", s.td_norm, s.td_steps),
            Bound::AtLeast,
            n,
            passed,
        )
        .with_detail(format!("first crossing per seed {hits:?}")),
    );

    for (alg, beta) in [(Algorithm::Tdc, 0.0), (Algorithm::Tdrc, s.tdrc_beta)] {
        let cfg = baird_config(alg, s.gradient_alpha_w, s.gradient_alpha_theta, beta, s.gradient_steps, s.cadence);
        let mut firsts = Vec::new();
        let mut finals = Vec::new();
        for seed in &s.seeds {
            let r = run_seed(&cfg, *seed, gradtd::par::Exec::Sequential)?;
            firsts.push(first_step(&r.series("pbe"), |x| x < s.pbe_target));
            finals.push(r.last("pbe").unwrap_or(f64::NAN));
        }
        let passed = firsts.iter().filter(|h| h.is_some()).count() as f64;
        let worst_final = finals.iter().copied().fold(0.0f64, f64::max);
        checks.push(
            Check::new(
                g,
                format!(
                    "{}(0) with IS (alpha_w {}, alpha_h {}, beta {beta}): seeds reaching PBE < {:.0e} within {} steps",
                    alg.name(),
                    s.gradient_alpha_w,
                    s.gradient_alpha_theta,
                    s.pbe_target,
                    s.gradient_steps
                ),
                Bound::AtLeast,
                n,
                passed,
            )
            .with_detail(format!("first step per seed {firsts:?}; worst final PBE {worst_final:.2e}")),
        );
    }
    Ok(checks)
}

pub fn losses() -> Result<Vec<Check>> {
    let g = Group::Losses;
    let mut rng = stream(13, Stream::Data);
    let mut checks = Vec::new();
    let features = random_features(8, 4, &mut rng);

    // λ = 0 forward view vs one-step updates, bit for bit
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for alg in [Algorithm::Td, Algorithm::Gtd2, Algorithm::Tdc, Algorithm::Tdrc] {
        for family in [ApproxFamily::Linear, ApproxFamily::Mlp] {
            for terminal in [false, true] {
                let v = make_approx(family, 4, &mut rng);
                let h = make_approx(family, 4, &mut rng);
                let (s, s2) = (rng.random_range(0..8), rng.random_range(0..8));
                let tr = Transition::new(features[s].clone(), 0, uniform(&mut rng, -1.0, 1.0), features[s2].clone(), terminal);
                let cfg = PredictionConfig::new(alg, View::Forward, 0.0, 0.9, 0.1);
                let fwd = prediction::forward_update(&cfg, &Trajectory::new(vec![tr.clone()], 0.0)?, &v, &h, None)?;
                let one = prediction::one_step_update(&cfg, &tr, &v, &h)?;
                total += 1;
                if fwd != one {
                    mismatches += 1;
                }
            }
        }
    }
    checks.push(Check::new(g, format!("lambda=0 forward vs one-step updates: bitwise mismatches of {total}"), Bound::AtMost, 0.0, mismatches as f64));

    // TDRC with β = 0 against TDC, both views
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for family in [ApproxFamily::Linear, ApproxFamily::Mlp] {
        for lambda in [0.0, 0.5, 0.9, 1.0] {
            let v = make_approx(family, 4, &mut rng);
            let h = make_approx(family, 4, &mut rng);
            let trs = relink(random_trajectory(&features, 15, &mut rng));
            let traj = Trajectory::new(trs, 0.0)?;
            let ratios: Vec<f64> = (0..traj.len()).map(|_| uniform(&mut rng, 0.1, 2.0)).collect();
            let mut tdc = PredictionConfig::new(Algorithm::Tdc, View::Forward, lambda, 0.9, 0.1);
            tdc.use_is = true;
            let tdrc = PredictionConfig {
                algorithm: Algorithm::Tdrc,
                beta: 0.0,
                ..tdc
            };
            let a = prediction::forward_update(&tdc, &traj, &v, &h, Some(&ratios))?;
            let b = prediction::forward_update(&tdrc, &traj, &v, &h, Some(&ratios))?;
            let c = backward_total(&tdc, &traj, &ratios, &v, &h)?;
            let d = backward_total(&tdrc, &traj, &ratios, &v, &h)?;
            total += 2;
            mismatches += usize::from(a != b) + usize::from(c != d);
        }
    }
    checks.push(Check::new(g, format!("TDRC(beta=0) vs TDC: bitwise mismatches of {total}"), Bound::AtMost, 0.0, mismatches as f64));

    // loss-form gradients against the direct critic and auxiliary updates
    let (mut critic_gap, mut h_gap) = (0.0f64, 0.0f64);
    for lambda in [0.0, 0.5, 0.95, 1.0] {
        let v = Approximator::mlp(4, &[8, 8], 1, Activation::Tanh, 1.0, &mut rng);
        let hnet = Approximator::mlp(4, &[8, 8], 1, Activation::Tanh, 1.0, &mut rng);
        let trs = relink(random_trajectory(&features, 32, &mut rng));
        let traj = Trajectory::bootstrapped(trs, |x| v.value(x).unwrap_or(0.0))?;
        let (h_vals, tapes) = critic::evaluate_h(&traj, &hnet)?;
        let (dw, eval) = critic::critic_update(&traj, &v, &h_vals, 0.99, lambda)?;
        let loss = critic::critic_loss_gradient(&traj, &v, &h_vals, 0.99, lambda)?;
        let neg: Vec<f64> = dw.0.as_slice().iter().map(|x| -x).collect();
        critic_gap = critic_gap.max(scaled_diff(loss.0.as_slice(), &neg));
        let dh = critic::h_update(&hnet, &tapes, &h_vals, &eval.errors, 1.0);
        let hl = critic::h_loss_gradient(&traj, &hnet, &eval.errors, 1.0)?;
        let neg: Vec<f64> = dh.0.as_slice().iter().map(|x| -x).collect();
        h_gap = h_gap.max(scaled_diff(hl.0.as_slice(), &neg));
    }
    checks.push(Check::new(g, "critic loss gradient vs negated direct update (scaled)", Bound::AtMost, 1e-10, critic_gap));
    checks.push(Check::new(g, "h loss gradient vs negated direct update (scaled)", Bound::AtMost, 1e-10, h_gap));

    // TDC − GTD2 forward updates = Σ_t (δ^λ_t − H_t) ∇V_t
    let mut gap = 0.0f64;
    for lambda in [0.0, 0.5, 0.9, 1.0] {
        let v = make_approx(ApproxFamily::Mlp, 4, &mut rng);
        let h = make_approx(ApproxFamily::Mlp, 4, &mut rng);
        let trs = relink(random_trajectory(&features, 20, &mut rng));
        let traj = Trajectory::new(trs, 0.0)?;
        let ratios: Vec<f64> = (0..traj.len()).map(|_| uniform(&mut rng, 0.1, 2.0)).collect();
        let mut cfg = PredictionConfig::new(Algorithm::Tdc, View::Forward, lambda, 0.9, 0.1);
        cfg.use_is = true;
        let tdc = prediction::forward_update(&cfg, &traj, &v, &h, Some(&ratios))?;
        let gtd2 = prediction::forward_update(&PredictionConfig { algorithm: Algorithm::Gtd2, ..cfg }, &traj, &v, &h, Some(&ratios))?;
        let parts = gradtd::returns::td_lambda_error_and_grad(&traj, &v, 0.9, lambda, Some(&ratios))?;
        let mut expected = vec![0.0; v.num_params()];
        for (t, tr) in traj.transitions().iter().enumerate() {
            let hv = h.value(&tr.state)?;
            for (e, gv) in expected.iter_mut().zip(parts.value_grads[t].0.as_slice()) {
                *e += (parts.errors[t] - hv) * gv;
            }
        }
        let diff: Vec<f64> = tdc.dw.0.as_slice().iter().zip(gtd2.dw.0.as_slice()).map(|(a, b)| a - b).collect();
        gap = gap.max(max_abs_diff(&diff, &expected));
    }
    checks.push(Check::new(g, "TDC - GTD2 forward update = sum (err - H) grad V", Bound::AtMost, 1e-12, gap));
    Ok(checks)
}

/// Runs `groups` and renders one line per check.
pub fn run_groups(groups: &[Group]) -> Result<(Vec<Check>, String)> {
    let mut checks = Vec::new();
    for g in groups {
        checks.extend(g.run()?);
    }
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    Ok((checks, text))
}
