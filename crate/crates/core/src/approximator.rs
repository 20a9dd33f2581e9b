//! Value, action-value and auxiliary function approximators.
//!
//! Three kinds are supported: tabular (linear over one-hot features),
//! linear, and fully connected MLPs. All of them expose their outputs and
//! exact parameter gradients of those outputs; MLP gradients are computed by
//! reverse accumulation over a recorded forward pass.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{Gradient, Layout, ParamVector};
use crate::returns::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ApproxKind {
    /// One weight per (state, output); inputs are one-hot state encodings.
    Tabular { n_states: usize },
    Linear { n_features: usize },
    Mlp {
        hidden: Vec<usize>,
        #[serde(default)]
        activation: Activation,
    },
}

/// How the TD error's current and bootstrap predictions are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdMode {
    /// `R + γ v̂(S') − v̂(S)`
    StateValue,
    /// `R + γ max_a' q̂(S', a') − q̂(S, A)`
    MaxQ,
}

/// Activations recorded during a forward pass, consumed by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn outputs(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// A differentiable function from a feature vector to `outputs` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximator {
    kind: ApproxKind,
    input_dim: usize,
    outputs: usize,
    params: ParamVector,
    /// `[input, hidden.., outputs]`, precomputed for MLPs.
    widths: Vec<usize>,
}

impl Approximator {
    /// Zero-initialised table with `outputs` entries per state.
    pub fn tabular(n_states: usize, outputs: usize) -> Self {
        let layout = Arc::new(Layout::from_sizes([("table", n_states * outputs)]));
        Approximator {
            kind: ApproxKind::Tabular { n_states },
            input_dim: n_states,
            outputs,
            params: ParamVector::zeros(layout),
            widths: vec![n_states, outputs],
        }
    }

    /// Zero-initialised linear map; output `k` uses weight block `k`.
    pub fn linear(n_features: usize, outputs: usize) -> Self {
        let layout = Arc::new(Layout::from_sizes([("weight", n_features * outputs)]));
        Approximator {
            kind: ApproxKind::Linear { n_features },
            input_dim: n_features,
            outputs,
            params: ParamVector::zeros(layout),
            widths: vec![n_features, outputs],
        }
    }

    /// MLP with uniform fan-in initialisation (variance `1/fan_in`), zero
    /// biases, and the output layer scaled by `head_scale`.
    pub fn mlp<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        outputs: usize,
        activation: Activation,
        head_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(outputs);
        let mut parts = Vec::new();
        for l in 0..widths.len() - 1 {
            parts.push((format!("layer{l}.weight"), widths[l] * widths[l + 1]));
            parts.push((format!("layer{l}.bias"), widths[l + 1]));
        }
        let layout = Arc::new(Layout::from_sizes(parts));
        let mut data = vec![0.0; layout.len()];
        let n_layers = widths.len() - 1;
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (3.0 / fan_in as f64).sqrt();
            let scale = if l + 1 == n_layers { head_scale } else { 1.0 };
            for w in &mut data[offset..offset + fan_in * fan_out] {
                *w = scale * rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Approximator {
            kind: ApproxKind::Mlp {
                hidden: hidden.to_vec(),
                activation,
            },
            input_dim,
            outputs,
            params: ParamVector::from_vec(layout, data).expect("finite init"),
            widths,
        }
    }

    pub fn kind(&self) -> &ApproxKind {
        &self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Replaces all parameters.
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        self.params.assign(values)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "approximator input",
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_arity(&self, context: &'static str, expected: usize) -> Result<()> {
        if self.outputs != expected {
            return Err(Error::OutputArity {
                context,
                expected,
                actual: self.outputs,
            });
        }
        Ok(())
    }

    fn check_head(&self, head: usize) -> Result<()> {
        if head >= self.outputs {
            return Err(Error::OutOfRange {
                context: "approximator output head",
                index: head,
                len: self.outputs,
            });
        }
        Ok(())
    }

    /// Forward pass recording the activations needed by [`Self::backward`].
    pub fn forward_tape(&self, x: &[f64]) -> Result<Tape> {
        self.check_input(x)?;
        let mut tape = Tape {
            acts: Vec::with_capacity(self.widths.len()),
        };
        tape.acts.push(x.to_vec());
        let p = self.params.as_slice();
        let n_layers = self.widths.len() - 1;
        let activation = match &self.kind {
            ApproxKind::Mlp { activation, .. } => Some(*activation),
            _ => None,
        };
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &p[offset..offset + n_in * n_out];
            offset += n_in * n_out;
            let input = &tape.acts[l];
            let mut out = vec![0.0; n_out];
            for (o, out_o) in out.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *out_o = row.iter().zip(input).map(|(a, b)| a * b).sum();
            }
            if let Some(act) = activation {
                let b = &p[offset..offset + n_out];
                offset += n_out;
                let hidden = l + 1 < n_layers;
                for (v, bi) in out.iter_mut().zip(b) {
                    *v += bi;
                    if hidden {
                        *v = act.apply(*v);
                    }
                }
            }
            tape.acts.push(out);
        }
        Ok(tape)
    }

    /// Adds `Σ_k upstream[k] ∇_params output_k` into `acc`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.outputs);
        debug_assert_eq!(acc.len(), self.params.len());
        // every contribution is a multiple of upstream
        if upstream.iter().all(|&u| u == 0.0) {
            return;
        }
        let p = self.params.as_slice();
        let n_layers = self.widths.len() - 1;
        let (activation, has_bias) = match &self.kind {
            ApproxKind::Mlp { activation, .. } => (Some(*activation), true),
            _ => (None, false),
        };
        // offsets of each layer's weight block
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.widths[l] * self.widths[l + 1] + if has_bias { self.widths[l + 1] } else { 0 };
        }
        let mut delta = upstream.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w_off = offsets[l];
            let input = &tape.acts[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let g = &mut acc[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
            }
            if has_bias {
                let b_off = w_off + n_in * n_out;
                for (gi, d) in acc[b_off..b_off + n_out].iter_mut().zip(&delta) {
                    *gi += d;
                }
            }
            if l > 0 {
                let w = &p[w_off..w_off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (pi, wi) in prev.iter_mut().zip(row) {
                        *pi += d * wi;
                    }
                }
                let act = activation.expect("hidden layers only exist in MLPs");
                for (pi, &y) in prev.iter_mut().zip(input) {
                    *pi *= act.derivative_from_output(y);
                }
                delta = prev;
            }
        }
    }

    /// All outputs at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ApproxKind::Mlp { .. } => Ok(self.forward_tape(x)?.acts.pop().unwrap_or_default()),
            _ => {
                self.check_input(x)?;
                let n = self.input_dim;
                let p = self.params.as_slice();
                Ok((0..self.outputs)
                    .map(|k| crate::param::dot(&p[k * n..(k + 1) * n], x))
                    .collect())
            }
        }
    }

    /// Output `head` at `x` together with its parameter gradient.
    pub fn output_and_grad(&self, x: &[f64], head: usize) -> Result<(f64, Gradient)> {
        self.check_head(head)?;
        let mut g = Gradient::zeros(self.params.len());
        let value = match self.kind {
            ApproxKind::Mlp { .. } => {
                let tape = self.forward_tape(x)?;
                let mut up = vec![0.0; self.outputs];
                up[head] = 1.0;
                self.backward(&tape, &up, &mut g);
                tape.outputs()[head]
            }
            _ => {
                self.check_input(x)?;
                let n = self.input_dim;
                g[head * n..(head + 1) * n].copy_from_slice(x);
                crate::param::dot(&self.params.as_slice()[head * n..(head + 1) * n], x)
            }
        };
        Ok((value, g))
    }

    /// State value `v̂(s, w)`; requires a single output.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_arity("value", 1)?;
        Ok(self.forward(x)?[0])
    }

    /// `∇_w v̂(s, w)`; requires a single output.
    pub fn grad_value(&self, x: &[f64]) -> Result<Gradient> {
        self.check_arity("grad_value", 1)?;
        Ok(self.output_and_grad(x, 0)?.1)
    }

    /// `q̂(s, ·, w)`.
    pub fn action_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }

    /// Gradient of `max_a q̂(s, a, w)`: the gradient of the greedy head,
    /// ties broken towards the lowest action index.
    pub fn grad_max_action_value(&self, x: &[f64]) -> Result<(Gradient, usize)> {
        let q = self.action_values(x)?;
        if q.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let a = argmax(&q);
        Ok((self.output_and_grad(x, a)?.1, a))
    }

    /// `∇_w δ = γ g_next − g_cur` for one transition. The bootstrap gradient
    /// is zero when the transition is terminal.
    pub fn grad_td_error(&self, t: &Transition, gamma: f64, mode: TdMode) -> Result<Gradient> {
        let head = match mode {
            TdMode::StateValue => {
                self.check_arity("grad_td_error(state value)", 1)?;
                0
            }
            TdMode::MaxQ => t.action,
        };
        let (_, g_cur) = self.output_and_grad(&t.state, head)?;
        let mut out = Gradient::zeros(self.params.len());
        if !t.terminal {
            let g_next = match mode {
                TdMode::StateValue => self.grad_value(&t.next_state)?,
                TdMode::MaxQ => self.grad_max_action_value(&t.next_state)?.0,
            };
            out.axpy(gamma, &g_next);
        }
        out.axpy(-1.0, &g_cur);
        Ok(out)
    }

    /// TD error `δ` for one transition under `mode`.
    pub fn td_error(&self, t: &Transition, gamma: f64, mode: TdMode) -> Result<f64> {
        let current = match mode {
            TdMode::StateValue => self.value(&t.state)?,
            TdMode::MaxQ => {
                let q = self.action_values(&t.state)?;
                *q.get(t.action).ok_or(Error::OutOfRange {
                    context: "transition action",
                    index: t.action,
                    len: q.len(),
                })?
            }
        };
        let next = if t.terminal {
            0.0
        } else {
            match mode {
                TdMode::StateValue => self.value(&t.next_state)?,
                TdMode::MaxQ => {
                    let q = self.action_values(&t.next_state)?;
                    q[argmax(&q)]
                }
            }
        };
        Ok(t.reward + gamma * next - current)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
