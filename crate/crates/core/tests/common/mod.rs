#![allow(dead_code)]

use gradtd::rng::{stream, Rng, Stream};
use gradtd::{Activation, Approximator, Trajectory, Transition};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    stream(seed, Stream::Data)
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, -scale, scale)).collect()
}

pub fn linear(rng: &mut Rng, dim: usize, outputs: usize) -> Approximator {
    let mut a = Approximator::linear(dim, outputs);
    let p = random_vec(rng, a.num_params(), 1.0);
    a.set_params(&p).unwrap();
    a
}

pub fn mlp(rng: &mut Rng, dim: usize, outputs: usize) -> Approximator {
    Approximator::mlp(dim, &[6, 5], outputs, Activation::Tanh, 1.0, rng)
}

/// Random contiguous transitions over `dim`-dimensional states. Terminals
/// occur with probability `p_terminal`; the last step is terminal when
/// `end_terminal` is set.
pub fn random_transitions(rng: &mut Rng, len: usize, dim: usize, p_terminal: f64, end_terminal: bool) -> Vec<Transition> {
    let mut state = random_vec(rng, dim, 1.0);
    (0..len)
        .map(|t| {
            let next = random_vec(rng, dim, 1.0);
            let terminal = if t + 1 == len { end_terminal } else { rng.random::<f64>() < p_terminal };
            let tr = Transition::new(state.clone(), 0, uniform(rng, -1.0, 1.0), next.clone(), terminal);
            state = if terminal { random_vec(rng, dim, 1.0) } else { next };
            tr
        })
        .collect()
}

pub fn episode(rng: &mut Rng, len: usize, dim: usize) -> Trajectory {
    Trajectory::new(random_transitions(rng, len, dim, 0.0, true), 0.0).unwrap()
}

pub fn ratios(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, 0.1, 2.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max|a − b| / max(1, max|b|)`.
pub fn scaled_diff(a: &[f64], b: &[f64]) -> f64 {
    max_abs_diff(a, b) / b.iter().fold(1.0f64, |m, x| m.max(x.abs()))
}

/// Central finite difference of `f` at `x` with step `eps`.
pub fn finite_difference(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let up = f(&p);
            p[i] = orig - eps;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}
