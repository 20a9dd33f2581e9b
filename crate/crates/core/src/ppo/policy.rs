use crate::approximator::Approximator;
use crate::error::Result;
use crate::rng::Rng;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// `log softmax(logits)[a]`
pub fn log_prob_from_logits(logits: &[f64], action: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[action] - lse
}

/// `−Σ p log p`, skipping zero-probability actions.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `∂ log p_a / ∂ z_i = 1[i = a] − p_i`
pub fn log_prob_grad_logits(probs: &[f64], action: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| if i == action { 1.0 - p } else { -p })
        .collect()
}

/// `∂H / ∂z_i = −p_i (log p_i + H)`
pub fn entropy_grad_logits(probs: &[f64]) -> Vec<f64> {
    let h = entropy(probs);
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

/// Categorical policy whose network outputs one logit per action.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    pub net: Approximator,
}

impl CategoricalPolicy {
    pub fn new(net: Approximator) -> Self {
        CategoricalPolicy { net }
    }

    pub fn n_actions(&self) -> usize {
        self.net.outputs()
    }

    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.net.forward(obs)?))
    }

    pub fn log_prob(&self, obs: &[f64], action: usize) -> Result<f64> {
        Ok(log_prob_from_logits(&self.net.forward(obs)?, action))
    }

    /// Samples an action; returns it with its log-probability.
    pub fn sample(&self, obs: &[f64], rng: &mut Rng) -> Result<(usize, f64)> {
        let logits = self.net.forward(obs)?;
        let probs = softmax(&logits);
        let a = crate::envs::sample_index(&probs, rng);
        Ok((a, log_prob_from_logits(&logits, a)))
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(crate::approximator::argmax(&self.net.forward(obs)?))
    }
}
