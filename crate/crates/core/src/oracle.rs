//! Exact computations on tabular MDPs.
//!
//! These are ground truth for the learning algorithms: true values, the
//! state distribution, expected TD(λ) errors, the projected Bellman error
//! PBE(λ) for linear auxiliary classes, and a brute-force evaluation of the
//! forward-view total update used to check the forward/backward equivalence.
//! Everything is a dense direct solve; state counts are expected to be small.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envs::MdpSpec;
use crate::error::{Error, Result};
use crate::prediction::Algorithm;
use crate::rng::Rng;

/// `π[s][a]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "policy row {s} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(PolicyTable { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        PolicyTable {
            probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let probs = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        PolicyTable { probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn sample(&self, s: usize, rng: &mut Rng) -> usize {
        crate::envs::sample_index(&self.probs[s], rng)
    }

    fn check(&self, mdp: &MdpSpec) -> Result<()> {
        if self.probs.len() != mdp.n_states || self.probs.iter().any(|r| r.len() != mdp.n_actions) {
            return Err(Error::DimensionMismatch {
                context: "policy table vs MDP",
                expected: mdp.n_states * mdp.n_actions,
                actual: self.probs.iter().map(Vec::len).sum(),
            });
        }
        Ok(())
    }
}

/// `P_π[s][s']` and expected one-step reward `r_π[s]`.
pub fn policy_dynamics(mdp: &MdpSpec, pi: &PolicyTable) -> Result<(DMatrix<f64>, DVector<f64>)> {
    pi.check(mdp)?;
    let n = mdp.n_states;
    let mut p = DMatrix::zeros(n, n);
    let mut r = DVector::zeros(n);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for s2 in 0..n {
                let pt = mdp.transitions[s][a][s2];
                p[(s, s2)] += w * pt;
                r[s] += w * pt * mdp.rewards[s][a][s2];
            }
        }
    }
    Ok((p, r))
}

/// `P_π` with the rows of terminal states zeroed.
fn truncated_dynamics(mdp: &MdpSpec, pi: &PolicyTable) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (mut p, mut r) = policy_dynamics(mdp, pi)?;
    for &s in &mdp.terminal_states {
        p.row_mut(s).fill(0.0);
        r[s] = 0.0;
    }
    Ok((p, r))
}

fn solve(a: DMatrix<f64>, b: DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(&b).ok_or(Error::SingularSystem { context })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { context });
    }
    // reject numerically singular systems via the residual
    let residual = (&a * &x - &b).amax();
    if residual > 1e-8 * (1.0 + b.amax()) {
        return Err(Error::SingularSystem { context });
    }
    Ok(x)
}

/// `v_π` from `(I − γ P̃_π) v = r_π`; terminal states have value zero.
pub fn exact_values(mdp: &MdpSpec, pi: &PolicyTable) -> Result<Vec<f64>> {
    let (p, r) = truncated_dynamics(mdp, pi)?;
    let n = mdp.n_states;
    let a = DMatrix::identity(n, n) - p * mdp.gamma;
    Ok(solve(a, r, "exact_values")?.as_slice().to_vec())
}

/// `q*` by value iteration, stopped when successive sweeps differ by less
/// than `tol` in max norm. Terminal states have all-zero rows.
pub fn optimal_action_values(mdp: &MdpSpec, tol: f64, max_sweeps: usize) -> Result<Vec<Vec<f64>>> {
    let (n, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![vec![0.0; na]; n];
    for _ in 0..max_sweeps {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut change: f64 = 0.0;
        for s in (0..n).filter(|s| !mdp.is_terminal(*s)) {
            for a in 0..na {
                let backup: f64 = (0..n)
                    .map(|t| {
                        let next = if mdp.is_terminal(t) { 0.0 } else { v[t] };
                        mdp.transitions[s][a][t] * (mdp.rewards[s][a][t] + mdp.gamma * next)
                    })
                    .sum();
                change = change.max((backup - q[s][a]).abs());
                q[s][a] = backup;
            }
        }
        if change < tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged {
        context: "value iteration",
        iterations: max_sweeps,
    })
}

/// Per state, the actions within `tol` of the best action value.
pub fn optimal_actions(q_star: &[Vec<f64>], tol: f64) -> Vec<Vec<usize>> {
    q_star
        .iter()
        .map(|row| {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..row.len()).filter(|a| row[*a] >= best - tol).collect()
        })
        .collect()
}

/// Reachability closure from each state under `P_π`.
fn reachability(p: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = p.nrows();
    (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for v in 0..n {
                    if p[(u, v)] > 0.0 && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen
        })
        .collect()
}

/// State distribution `d` under `π`.
///
/// Episodic MDPs (with terminal states) use the normalised expected number
/// of visits to each non-terminal state starting from the start
/// distribution. Continuing MDPs use the stationary distribution of the
/// unique recurrent class reachable from the start distribution.
pub fn stationary_distribution(mdp: &MdpSpec, pi: &PolicyTable) -> Result<Vec<f64>> {
    let n = mdp.n_states;
    if mdp.is_episodic() {
        let (p, _) = truncated_dynamics(mdp, pi)?;
        let a = (DMatrix::identity(n, n) - p).transpose();
        let d0 = DVector::from_vec(mdp.start.clone());
        let mut visits = solve(a, d0, "episodic visit distribution")?;
        for &s in &mdp.terminal_states {
            visits[s] = 0.0;
        }
        let total = visits.sum();
        return Ok(visits.iter().map(|v| v / total).collect());
    }

    let (p, _) = policy_dynamics(mdp, pi)?;
    let reach = reachability(&p);
    let reachable: Vec<bool> = (0..n)
        .map(|t| (0..n).any(|s| mdp.start[s] > 0.0 && reach[s][t]))
        .collect();
    // recurrent: every state reachable from s can reach s back
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for s in (0..n).filter(|&s| reachable[s]) {
        let recurrent = (0..n).all(|t| !reach[s][t] || reach[t][s]);
        if recurrent && !classes.iter().any(|c| c.contains(&s)) {
            classes.push((0..n).filter(|&t| reach[s][t]).collect());
        }
    }
    if classes.len() != 1 {
        return Err(Error::ReducibleChain(classes.len(), classes));
    }
    let class = &classes[0];
    let k = class.len();
    // solve d (I − P_CC) = 0 with Σ d = 1
    let mut a = DMatrix::zeros(k, k);
    for (i, &si) in class.iter().enumerate() {
        for (j, &sj) in class.iter().enumerate() {
            a[(j, i)] = if i == j { 1.0 } else { 0.0 } - p[(si, sj)];
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let dc = solve(a, b, "stationary distribution")?;
    let mut d = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        d[s] = dc[i].max(0.0);
    }
    Ok(d)
}

/// Expected one-step TD error `δ̄(s) = r_π(s) + γ (P_π v̂)(s) − v̂(s)`,
/// bootstrapping zero into terminal states; zero on terminal states.
pub fn expected_td_error(mdp: &MdpSpec, pi: &PolicyTable, v_hat: &[f64]) -> Result<Vec<f64>> {
    check_len("v̂", mdp.n_states, v_hat.len())?;
    let (p, r) = truncated_dynamics(mdp, pi)?;
    let mut v = DVector::from_column_slice(v_hat);
    for &s in &mdp.terminal_states {
        v[s] = 0.0;
    }
    let mut delta = r + p * &v * mdp.gamma - v;
    for &s in &mdp.terminal_states {
        delta[s] = 0.0;
    }
    Ok(delta.as_slice().to_vec())
}

/// Expected TD(λ) error `δ^λ_π = (I − γλ P̃_π)^{-1} δ̄`.
pub fn exact_td_lambda_error(mdp: &MdpSpec, pi: &PolicyTable, v_hat: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let delta = DVector::from_vec(expected_td_error(mdp, pi, v_hat)?);
    let (p, _) = truncated_dynamics(mdp, pi)?;
    let n = mdp.n_states;
    let a = DMatrix::identity(n, n) - p * (mdp.gamma * lambda);
    Ok(solve(a, delta, "exact_td_lambda_error")?.as_slice().to_vec())
}

/// PBE(λ) for a linear auxiliary class spanned by `h_features` (one row per
/// state), weighted by `weighting`:
///
/// `max_θ Σ_s d(s) (2 δ^λ_π(s) h_θ(s) − h_θ(s)²) = aᵀ M⁻¹ a`
/// with `a = Ψᵀ D δ^λ_π` and `M = Ψᵀ D Ψ`.
pub fn exact_pbe_lambda(
    mdp: &MdpSpec,
    pi: &PolicyTable,
    weighting: &[f64],
    h_features: &[Vec<f64>],
    v_hat: &[f64],
    lambda: f64,
) -> Result<f64> {
    let n = mdp.n_states;
    check_len("state weighting", n, weighting.len())?;
    check_len("h feature rows", n, h_features.len())?;
    let delta = exact_td_lambda_error(mdp, pi, v_hat, lambda)?;
    let k = h_features.first().map_or(0, Vec::len);
    let psi = DMatrix::from_fn(n, k, |s, j| h_features[s][j]);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(weighting));
    let a = psi.transpose() * &d * DVector::from_vec(delta);
    let m = psi.transpose() * &d * &psi;
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max.abs().max(1e-300)) {
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Error::SingularGram { condition });
    }
    let chol = m.cholesky().ok_or(Error::SingularGram { condition: max / min })?;
    let x = chol.solve(&a);
    Ok(a.dot(&x).max(0.0))
}

/// Linear PBE(λ) with the same features for `v̂ = Φw` and the auxiliary
/// class, weighted by the on-policy state distribution.
pub fn linear_pbe(mdp: &MdpSpec, pi: &PolicyTable, features: &crate::envs::FeatureMap, w: &[f64], lambda: f64) -> Result<f64> {
    let d = stationary_distribution(mdp, pi)?;
    let v = linear_values(features, w)?;
    exact_pbe_lambda(mdp, pi, &d, features.rows(), &v, lambda)
}

/// `Φ w` for every state.
pub fn linear_values(features: &crate::envs::FeatureMap, w: &[f64]) -> Result<Vec<f64>> {
    check_len("weights", features.dim(), w.len())?;
    Ok(features.rows().iter().map(|x| crate::param::dot(x, w)).collect())
}

/// `√Σ_s d(s) (v̂(s) − v(s))²`
pub fn rmsve(d: &[f64], v_hat: &[f64], v_true: &[f64]) -> f64 {
    d.iter()
        .zip(v_hat.iter().zip(v_true))
        .map(|(w, (a, b))| w * (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Per-step quantities of one episode evaluated at frozen parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStep {
    pub delta: f64,
    pub grad_delta: Vec<f64>,
    /// `∇_w V_t`
    pub value_grad: Vec<f64>,
    /// `H_t`
    pub h: f64,
    /// `∇_θ H_t`
    pub h_grad: Vec<f64>,
    pub rho: f64,
}

/// Total forward-view update `(Σ_t Δw_t, Σ_t Δθ_t)` over one episode,
/// expanding every TD(λ) error as its explicit importance-weighted sum
/// `Σ_i (γλ)^{i−t} (Π_{j=t..i} ρ_j) δ_i`.
pub fn forward_total_update(
    steps: &[FrozenStep],
    algorithm: Algorithm,
    gamma_lambda: f64,
    beta: f64,
    theta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = steps.len();
    let dw = steps.first().map_or(0, |s| s.value_grad.len());
    let dt = theta.len();
    let mut total_w = vec![0.0; dw];
    let mut total_theta = vec![0.0; dt];
    for t in 0..n {
        let mut err = 0.0;
        let mut err_grad = vec![0.0; dw];
        let mut weight = 1.0;
        for (i, step) in steps.iter().enumerate().skip(t) {
            weight *= step.rho;
            if i > t {
                weight *= gamma_lambda;
            }
            err += weight * step.delta;
            for (g, x) in err_grad.iter_mut().zip(&step.grad_delta) {
                *g += weight * x;
            }
        }
        let s = &steps[t];
        match algorithm {
            Algorithm::Td => {
                for (o, g) in total_w.iter_mut().zip(&s.value_grad) {
                    *o += err * g;
                }
            }
            Algorithm::Gtd2 => {
                for (o, g) in total_w.iter_mut().zip(&err_grad) {
                    *o -= s.h * g;
                }
            }
            Algorithm::Tdc | Algorithm::Tdrc => {
                for i in 0..dw {
                    total_w[i] += err * s.value_grad[i] - s.h * (s.value_grad[i] + err_grad[i]);
                }
            }
        }
        if algorithm != Algorithm::Td {
            for (o, g) in total_theta.iter_mut().zip(&s.h_grad) {
                *o += (err - s.h) * g;
            }
            if algorithm == Algorithm::Tdrc {
                for (o, th) in total_theta.iter_mut().zip(theta) {
                    *o -= beta * th;
                }
            }
        }
    }
    (total_w, total_theta)
}
