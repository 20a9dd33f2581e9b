//! TDRC(λ) critic and auxiliary updates over sequences, in direct form and
//! in loss-gradient form.
//!
//! For one sequence with current parameters the direct updates are
//!
//! ```text
//! Δw = Σ_t δ^λ_t ∇V_t − h_t (∇V_t + ∇δ^λ_t)
//! Δθ = Σ_t (δ^λ_t − h_t) ∇h_t − β θ
//! ```
//!
//! [`critic_update`] never materialises `∇δ^λ_t`: since
//! `Σ_t h_t ∇δ^λ_t = Σ_i z_i ∇δ_i` with `z_i = h_i + γλ z_{i−1}`, the whole
//! update is `Σ_j c_j ∇V_j` for scalar coefficients `c_j`, one backward
//! pass per state. [`critic_loss_gradient`] instead builds every `∇δ^λ_t`
//! by the recursion of the returns module and differentiates
//! `L(w) = h δ^λ − sg(δ^λ − h) v̂`.

use crate::approximator::{Approximator, Tape};
use crate::error::Result;
use crate::param::Gradient;
use crate::returns::{lambda_recursion, td_lambda_error_and_grad, Trajectory};

/// Values and TD(λ) errors of one sequence under current parameters.
#[derive(Debug, Clone)]
pub struct SequenceEval {
    /// Tapes for `S_0..S_{T−1}` plus the bootstrap state when the final
    /// step continues.
    pub tapes: Vec<Tape>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Forward pass of `v̂` over a sequence and its TD(λ) errors.
pub fn evaluate_sequence(traj: &Trajectory, v: &Approximator, gamma: f64, lambda: f64) -> Result<SequenceEval> {
    let trs = traj.transitions();
    let n = trs.len();
    let mut tapes = Vec::with_capacity(n + 1);
    for tr in trs {
        tapes.push(v.forward_tape(&tr.state)?);
    }
    if !trs[n - 1].terminal {
        tapes.push(v.forward_tape(&trs[n - 1].next_state)?);
    }
    let values: Vec<f64> = tapes.iter().map(|t| t.outputs()[0]).collect();
    let deltas: Vec<f64> = (0..n)
        .map(|j| {
            let next = if trs[j].terminal { 0.0 } else { values[j + 1] };
            trs[j].reward + gamma * next - values[j]
        })
        .collect();
    let terminals: Vec<bool> = trs.iter().map(|t| t.terminal).collect();
    let errors = lambda_recursion(&deltas, &terminals, gamma * lambda, None);
    Ok(SequenceEval { tapes, values, errors })
}

/// Scalar coefficients `c_j` with `Δw = Σ_j c_j ∇V_j` over the states of
/// `eval.tapes`.
pub fn critic_coefficients(traj: &Trajectory, eval: &SequenceEval, h: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let trs = traj.transitions();
    let n = trs.len();
    let gl = gamma * lambda;
    let mut coef = vec![0.0; eval.tapes.len()];
    let mut z = 0.0;
    for j in 0..n {
        if j > 0 && trs[j - 1].terminal {
            z = 0.0;
        }
        z = h[j] + gl * z;
        // ∇δ_j = γ ∇V_{j+1} − ∇V_j, weighted by −z_j
        coef[j] += eval.errors[j] - h[j] + z;
        if !trs[j].terminal {
            coef[j + 1] -= gamma * z;
        }
    }
    coef
}

/// Direct critic update `Δw` for one sequence.
pub fn critic_update(traj: &Trajectory, v: &Approximator, h: &[f64], gamma: f64, lambda: f64) -> Result<(Gradient, SequenceEval)> {
    let eval = evaluate_sequence(traj, v, gamma, lambda)?;
    let coef = critic_coefficients(traj, &eval, h, gamma, lambda);
    let mut dw = Gradient::zeros(v.num_params());
    for (tape, c) in eval.tapes.iter().zip(&coef) {
        v.backward(tape, &[*c], &mut dw);
    }
    Ok((dw, eval))
}

/// `∇_w Σ_t L_t(w)` with `L_t = h_t δ^λ_t − sg(δ^λ_t − h_t) v̂(S_t)`, using
/// explicit per-step `∇δ^λ_t`.
pub fn critic_loss_gradient(traj: &Trajectory, v: &Approximator, h: &[f64], gamma: f64, lambda: f64) -> Result<Gradient> {
    let mut traj = traj.clone();
    let last = &traj.transitions()[traj.len() - 1];
    traj.bootstrap_value = if last.terminal { 0.0 } else { v.value(&last.next_state)? };
    let g = td_lambda_error_and_grad(&traj, v, gamma, lambda, None)?;
    let mut grad = Gradient::zeros(v.num_params());
    for t in 0..traj.len() {
        grad.axpy(h[t], &g.error_grads[t]);
        grad.axpy(-(g.errors[t] - h[t]), &g.value_grads[t]);
    }
    Ok(grad)
}

/// `Σ_t L_t(w)` with the stop-gradient factors `sg_t` held fixed.
pub fn critic_loss_value(traj: &Trajectory, v: &Approximator, h: &[f64], sg: &[f64], gamma: f64, lambda: f64) -> Result<f64> {
    let eval = evaluate_sequence(traj, v, gamma, lambda)?;
    Ok((0..traj.len())
        .map(|t| h[t] * eval.errors[t] - sg[t] * eval.values[t])
        .sum())
}

/// `ĥ` values and tapes over the states of a sequence.
pub fn evaluate_h(traj: &Trajectory, h: &Approximator) -> Result<(Vec<f64>, Vec<Tape>)> {
    let tapes = traj
        .transitions()
        .iter()
        .map(|tr| h.forward_tape(&tr.state))
        .collect::<Result<Vec<_>>>()?;
    Ok((tapes.iter().map(|t| t.outputs()[0]).collect(), tapes))
}

/// Direct auxiliary update `Σ_t (δ^λ_t − h_t) ∇h_t − β θ` for one sequence,
/// the regulariser counted once per step.
pub fn h_update(h: &Approximator, tapes: &[Tape], h_values: &[f64], errors: &[f64], beta: f64) -> Gradient {
    let mut d = Gradient::zeros(h.num_params());
    for ((tape, hv), e) in tapes.iter().zip(h_values).zip(errors) {
        h.backward(tape, &[e - hv], &mut d);
    }
    if beta != 0.0 {
        d.axpy(-beta * tapes.len() as f64, h.params().as_slice());
    }
    d
}

/// `∇_θ Σ_t [½ (δ^λ_t − h_t)² + β/2 ‖θ‖²]` with `δ^λ_t` constant.
pub fn h_loss_gradient(traj: &Trajectory, h: &Approximator, errors: &[f64], beta: f64) -> Result<Gradient> {
    let mut grad = Gradient::zeros(h.num_params());
    for (tr, e) in traj.transitions().iter().zip(errors) {
        let (hv, hg) = h.output_and_grad(&tr.state, 0)?;
        grad.axpy(-(e - hv), &hg);
        grad.axpy(beta, h.params().as_slice());
    }
    Ok(grad)
}
