//! Policy evaluation with semi-gradient TD(λ) and gradient TD(λ) methods.
//!
//! Both views are provided. The forward view sums per-step updates built
//! from TD(λ) errors over a whole trajectory with frozen parameters; the
//! backward view maintains the traces `(z^w, z^h, z^θ)` and produces one
//! update per transition. With frozen parameters over an episode the two
//! views produce equal total updates.
//!
//! The auxiliary estimate `ĥ` is a separate approximator from `v̂`.

use serde::{Deserialize, Serialize};

use crate::approximator::{Approximator, TdMode};
use crate::error::{Error, Result};
use crate::optim::{Direction, OptimizerState};
use crate::param::{self, Gradient};
use crate::returns::{self, Trajectory, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Td,
    Gtd2,
    Tdc,
    Tdrc,
}

impl Algorithm {
    pub fn uses_h(self) -> bool {
        self != Algorithm::Td
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Td => "td",
            Algorithm::Gtd2 => "gtd2",
            Algorithm::Tdc => "tdc",
            Algorithm::Tdrc => "tdrc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    pub algorithm: Algorithm,
    pub view: View,
    pub lambda: f64,
    /// Regularisation of `θ`; read by TDRC only.
    #[serde(default)]
    pub beta: f64,
    pub alpha_w: f64,
    /// Defaults to `alpha_w`.
    #[serde(default)]
    pub alpha_theta: Option<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub use_is: bool,
}

impl PredictionConfig {
    pub fn new(algorithm: Algorithm, view: View, lambda: f64, gamma: f64, alpha_w: f64) -> Self {
        PredictionConfig {
            algorithm,
            view,
            lambda,
            beta: if algorithm == Algorithm::Tdrc { 1.0 } else { 0.0 },
            alpha_w,
            alpha_theta: None,
            gamma,
            use_is: false,
        }
    }

    pub fn alpha_theta(&self) -> f64 {
        self.alpha_theta.unwrap_or(self.alpha_w)
    }

    /// `β` as the update rules see it: zero unless TDRC.
    pub fn effective_beta(&self) -> f64 {
        if self.algorithm == Algorithm::Tdrc {
            self.beta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta {} must be ≥ 0", self.beta));
        }
        if !(self.alpha_w > 0.0) || !(self.alpha_theta() > 0.0) {
            return bad("step sizes must be > 0".into());
        }
        Ok(())
    }
}

/// Eligibility traces `z^w`, `z^h`, `z^θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub z_w: Gradient,
    pub z_h: f64,
    pub z_theta: Gradient,
}

impl TraceState {
    pub fn zeros(n_w: usize, n_theta: usize) -> Self {
        TraceState {
            z_w: Gradient::zeros(n_w),
            z_h: 0.0,
            z_theta: Gradient::zeros(n_theta),
        }
    }

    pub fn reset(&mut self) {
        self.z_w.fill_zero();
        self.z_h = 0.0;
        self.z_theta.fill_zero();
    }

    pub fn is_zero(&self) -> bool {
        self.z_h == 0.0 && self.z_w.iter().all(|x| *x == 0.0) && self.z_theta.iter().all(|x| *x == 0.0)
    }

    fn check_finite(&self) -> Result<()> {
        if !self.z_h.is_finite() {
            return Err(Error::NonFinite {
                context: "trace z_h".into(),
                index: 0,
            });
        }
        self.z_w.check_finite("trace z_w")?;
        self.z_theta.check_finite("trace z_theta")
    }
}

/// All-zero traces of the same shapes.
pub fn reset_traces(traces: TraceState) -> TraceState {
    let mut t = traces;
    t.reset();
    t
}

/// A pair of parameter increments `(Δw, Δθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub dw: Gradient,
    pub dtheta: Gradient,
}

impl Update {
    pub fn zeros(n_w: usize, n_theta: usize) -> Self {
        Update {
            dw: Gradient::zeros(n_w),
            dtheta: Gradient::zeros(n_theta),
        }
    }

    pub fn add(&mut self, other: &Update) {
        self.dw.axpy(1.0, &other.dw);
        self.dtheta.axpy(1.0, &other.dtheta);
    }
}

fn check_scalar(approx: &Approximator, role: &'static str) -> Result<()> {
    if approx.outputs() != 1 {
        return Err(Error::OutputArity {
            context: role,
            expected: 1,
            actual: approx.outputs(),
        });
    }
    Ok(())
}

fn resolve_ratios<'a>(cfg: &PredictionConfig, ratios: Option<&'a [f64]>) -> Result<Option<&'a [f64]>> {
    match (cfg.use_is, ratios) {
        (false, _) => Ok(None),
        (true, Some(r)) => Ok(Some(r)),
        (true, None) => Err(Error::InvalidArgument(
            "importance sampling enabled but no ratios supplied".into(),
        )),
    }
}

/// Total forward-view update over `traj` with frozen parameters.
///
/// With `use_is`, `ratios[t]` multiplies every term of the TD(λ) error that
/// passes through step `t`.
pub fn forward_update(
    cfg: &PredictionConfig,
    traj: &Trajectory,
    v: &Approximator,
    h: &Approximator,
    ratios: Option<&[f64]>,
) -> Result<Update> {
    check_scalar(v, "value approximator")?;
    check_scalar(h, "h approximator")?;
    let ratios = resolve_ratios(cfg, ratios)?;
    let g = returns::td_lambda_error_and_grad(traj, v, cfg.gamma, cfg.lambda, ratios)?;
    let mut out = Update::zeros(v.num_params(), h.num_params());
    let theta = h.params().as_slice();
    let beta = cfg.effective_beta();
    for (t, tr) in traj.transitions().iter().enumerate() {
        let err = g.errors[t];
        let vg = &g.value_grads[t];
        match cfg.algorithm {
            Algorithm::Td => out.dw.axpy(err, vg),
            Algorithm::Gtd2 | Algorithm::Tdc | Algorithm::Tdrc => {
                let (hv, hg) = h.output_and_grad(&tr.state, 0)?;
                if cfg.algorithm == Algorithm::Gtd2 {
                    out.dw.axpy(-hv, &g.error_grads[t]);
                } else {
                    out.dw.axpy(err - hv, vg);
                    out.dw.axpy(-hv, &g.error_grads[t]);
                }
                out.dtheta.axpy(err - hv, &hg);
                if beta != 0.0 {
                    out.dtheta.axpy(-beta, theta);
                }
            }
        }
    }
    out.dw.check_finite("forward Δw")?;
    out.dtheta.check_finite("forward Δθ")?;
    Ok(out)
}

/// One backward-view step. Traces are advanced first and the update is
/// built from the new traces; after a terminal transition the traces are
/// returned to zero.
pub fn backward_step(
    cfg: &PredictionConfig,
    tr: &Transition,
    rho: f64,
    traces: &mut TraceState,
    v: &Approximator,
    h: &Approximator,
) -> Result<Update> {
    check_scalar(v, "value approximator")?;
    check_scalar(h, "h approximator")?;
    let rho = if cfg.use_is { rho } else { 1.0 };
    let gl = cfg.gamma * cfg.lambda;
    let (v_cur, g_cur) = v.output_and_grad(&tr.state, 0)?;
    let mut grad_delta = Gradient::zeros(v.num_params());
    let v_next = if tr.terminal {
        0.0
    } else {
        let (vn, gn) = v.output_and_grad(&tr.next_state, 0)?;
        grad_delta.axpy(cfg.gamma, &gn);
        vn
    };
    grad_delta.axpy(-1.0, &g_cur);
    let delta = tr.reward + cfg.gamma * v_next - v_cur;

    // z^w = ρ(γλ z^w + ∇V)
    traces.z_w.scale(gl);
    traces.z_w.axpy(1.0, &g_cur);
    traces.z_w.scale(rho);

    let mut out = Update::zeros(v.num_params(), h.num_params());
    if cfg.algorithm == Algorithm::Td {
        out.dw.axpy(delta, &traces.z_w);
    } else {
        let (hv, hg) = h.output_and_grad(&tr.state, 0)?;
        traces.z_h = rho * (gl * traces.z_h + hv);
        traces.z_theta.scale(gl);
        traces.z_theta.axpy(1.0, &hg);
        traces.z_theta.scale(rho);
        if cfg.algorithm != Algorithm::Gtd2 {
            out.dw.axpy(delta, &traces.z_w);
            out.dw.axpy(-hv, &g_cur);
        }
        out.dw.axpy(-traces.z_h, &grad_delta);
        out.dtheta.axpy(delta, &traces.z_theta);
        out.dtheta.axpy(-hv, &hg);
        let beta = cfg.effective_beta();
        if beta != 0.0 {
            out.dtheta.axpy(-beta, h.params().as_slice());
        }
    }
    traces.check_finite()?;
    out.dw.check_finite("backward Δw")?;
    out.dtheta.check_finite("backward Δθ")?;
    if tr.terminal {
        traces.reset();
    }
    Ok(out)
}

/// Online prediction agent over general approximators with SGD steps.
///
/// The backward view updates after every transition. The forward view
/// buffers an episode and applies its total update at the terminal step
/// (or when [`PredictionAgent::flush`] is called).
#[derive(Debug, Clone)]
pub struct PredictionAgent {
    pub cfg: PredictionConfig,
    pub v: Approximator,
    pub h: Approximator,
    traces: TraceState,
    opt_w: OptimizerState,
    opt_theta: OptimizerState,
    episode: Vec<Transition>,
    ratios: Vec<f64>,
}

impl PredictionAgent {
    pub fn new(cfg: PredictionConfig, v: Approximator, h: Approximator) -> Result<Self> {
        cfg.validate()?;
        check_scalar(&v, "value approximator")?;
        check_scalar(&h, "h approximator")?;
        let traces = TraceState::zeros(v.num_params(), h.num_params());
        Ok(PredictionAgent {
            opt_w: OptimizerState::sgd(cfg.alpha_w),
            opt_theta: OptimizerState::sgd(cfg.alpha_theta()),
            cfg,
            v,
            h,
            traces,
            episode: Vec::new(),
            ratios: Vec::new(),
        })
    }

    pub fn traces(&self) -> &TraceState {
        &self.traces
    }

    fn apply(&mut self, u: &Update) -> Result<()> {
        self.opt_w.apply(self.v.params_mut(), &u.dw, Direction::Ascent)?;
        if self.cfg.algorithm.uses_h() {
            self.opt_theta.apply(self.h.params_mut(), &u.dtheta, Direction::Ascent)?;
        }
        Ok(())
    }

    /// Feeds one transition with importance ratio `rho` (ignored unless
    /// `use_is`).
    pub fn observe(&mut self, tr: Transition, rho: f64) -> Result<()> {
        match self.cfg.view {
            View::Backward => {
                let u = backward_step(&self.cfg, &tr, rho, &mut self.traces, &self.v, &self.h)?;
                self.apply(&u)
            }
            View::Forward => {
                let terminal = tr.terminal;
                self.episode.push(tr);
                self.ratios.push(rho);
                if terminal {
                    self.flush()?;
                }
                Ok(())
            }
        }
    }

    /// Applies the buffered forward-view update, bootstrapping from the
    /// current value of the last next-state if the episode is unfinished.
    pub fn flush(&mut self) -> Result<()> {
        if self.episode.is_empty() {
            return Ok(());
        }
        let trs = std::mem::take(&mut self.episode);
        let ratios = std::mem::take(&mut self.ratios);
        let v = &self.v;
        let traj = Trajectory::bootstrapped(trs, |s| v.value(s).unwrap_or(0.0))?;
        let u = forward_update(&self.cfg, &traj, &self.v, &self.h, Some(&ratios))?;
        self.apply(&u)
    }

    pub fn end_episode(&mut self) -> Result<()> {
        self.traces.reset();
        self.flush()
    }
}

/// Allocation-free backward-view agent for linear `v̂ = wᵀx` and `ĥ = θᵀx`
/// over the same features, with SGD steps. Matches [`backward_step`]
/// followed by the two parameter updates.
#[derive(Debug, Clone)]
pub struct LinearAgent {
    pub cfg: PredictionConfig,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    z_w: Vec<f64>,
    z_theta: Vec<f64>,
    z_h: f64,
}

impl LinearAgent {
    pub fn new(cfg: PredictionConfig, w: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let n = w.len();
        Ok(LinearAgent {
            cfg,
            w,
            theta: vec![0.0; n],
            z_w: vec![0.0; n],
            z_theta: vec![0.0; n],
            z_h: 0.0,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        param::dot(&self.w, x)
    }

    pub fn reset_traces(&mut self) {
        self.z_w.fill(0.0);
        self.z_theta.fill(0.0);
        self.z_h = 0.0;
    }

    /// One transition `x → x_next` with reward `r`; `x_next` is ignored
    /// when `terminal`.
    pub fn step(&mut self, x: &[f64], reward: f64, x_next: &[f64], terminal: bool, rho: f64) -> Result<()> {
        let cfg = &self.cfg;
        let rho = if cfg.use_is { rho } else { 1.0 };
        let gl = cfg.gamma * cfg.lambda;
        let gamma = cfg.gamma;
        let v = param::dot(&self.w, x);
        let v_next = if terminal { 0.0 } else { param::dot(&self.w, x_next) };
        let delta = reward + gamma * v_next - v;
        let n = self.w.len();
        for i in 0..n {
            self.z_w[i] = rho * (gl * self.z_w[i] + x[i]);
        }
        let (aw, at) = (cfg.alpha_w, cfg.alpha_theta());
        if cfg.algorithm == Algorithm::Td {
            for i in 0..n {
                self.w[i] += aw * delta * self.z_w[i];
            }
        } else {
            let hv = param::dot(&self.theta, x);
            self.z_h = rho * (gl * self.z_h + hv);
            let beta = cfg.effective_beta();
            let correct = cfg.algorithm != Algorithm::Gtd2;
            for i in 0..n {
                self.z_theta[i] = rho * (gl * self.z_theta[i] + x[i]);
                let xn = if terminal { 0.0 } else { x_next[i] };
                let grad_delta = gamma * xn - x[i];
                let mut dw = -self.z_h * grad_delta;
                if correct {
                    dw += delta * self.z_w[i] - hv * x[i];
                }
                let dtheta = delta * self.z_theta[i] - hv * x[i] - beta * self.theta[i];
                self.w[i] += aw * dw;
                self.theta[i] += at * dtheta;
            }
        }
        if let Some(index) = self.w.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{} weights", cfg.algorithm.name()),
                index,
            });
        }
        if terminal {
            self.reset_traces();
        }
        Ok(())
    }
}

/// `(Δw, Δθ)` of the one-step methods, computed directly from a single
/// transition: GTD2 `Δw = −H∇δ`, TDC `Δw = δ∇V − H(∇V + ∇δ)`, and
/// `Δθ = (δ − H)∇H − βθ`.
pub fn one_step_update(cfg: &PredictionConfig, tr: &Transition, v: &Approximator, h: &Approximator) -> Result<Update> {
    let delta = v.td_error(tr, cfg.gamma, TdMode::StateValue)?;
    let grad_delta = v.grad_td_error(tr, cfg.gamma, TdMode::StateValue)?;
    let grad_v = v.grad_value(&tr.state)?;
    let mut out = Update::zeros(v.num_params(), h.num_params());
    if cfg.algorithm == Algorithm::Td {
        out.dw.axpy(delta, &grad_v);
        return Ok(out);
    }
    let (hv, hg) = h.output_and_grad(&tr.state, 0)?;
    match cfg.algorithm {
        Algorithm::Gtd2 => out.dw.axpy(-hv, &grad_delta),
        _ => {
            // δ∇V − H(∇V + ∇δ), grouped as (δ − H)∇V − H∇δ
            out.dw.axpy(delta - hv, &grad_v);
            out.dw.axpy(-hv, &grad_delta);
        }
    }
    out.dtheta.axpy(delta - hv, &hg);
    let beta = cfg.effective_beta();
    if beta != 0.0 {
        out.dtheta.axpy(-beta, h.params().as_slice());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(w: &[f64]) -> Approximator {
        let mut a = Approximator::linear(w.len(), 1);
        a.set_params(w).unwrap();
        a
    }

    fn cfg(alg: Algorithm, lambda: f64) -> PredictionConfig {
        let mut c = PredictionConfig::new(alg, View::Backward, lambda, 0.9, 0.1);
        c.beta = 0.0;
        c
    }

    #[test]
    fn z_h_recursion_example() {
        // γλ = 0.25 with H = [2, −1]
        let c = PredictionConfig {
            gamma: 0.5,
            ..cfg(Algorithm::Gtd2, 0.5)
        };
        let v = lin(&[0.0]);
        let h = lin(&[2.0]);
        let mut tr = TraceState::zeros(1, 1);
        let t0 = Transition::new(vec![1.0], 0, 0.0, vec![-0.5], false);
        backward_step(&c, &t0, 1.0, &mut tr, &v, &h).unwrap();
        assert_eq!(tr.z_h, 2.0);
        let t1 = Transition::new(vec![-0.5], 0, 0.0, vec![0.0], false);
        backward_step(&c, &t1, 1.0, &mut tr, &v, &h).unwrap();
        assert!((tr.z_h + 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_backward_step_matches_one_step() {
        let v = lin(&[0.3, -0.2]);
        let h = lin(&[0.1, 0.4]);
        let t = Transition::new(vec![1.0, 0.5], 0, 1.0, vec![0.0, 1.0], false);
        for alg in [Algorithm::Td, Algorithm::Gtd2, Algorithm::Tdc, Algorithm::Tdrc] {
            let c = cfg(alg, 0.7);
            let mut tr = TraceState::zeros(2, 2);
            let b = backward_step(&c, &t, 1.0, &mut tr, &v, &h).unwrap();
            let o = one_step_update(&c, &t, &v, &h).unwrap();
            assert!(param::max_abs_diff(&b.dw, &o.dw) < 1e-15, "{alg:?}");
            assert!(param::max_abs_diff(&b.dtheta, &o.dtheta) < 1e-15, "{alg:?}");
        }
    }

    #[test]
    fn terminal_and_reset_zero_traces() {
        let v = lin(&[0.3]);
        let h = lin(&[0.1]);
        let c = cfg(Algorithm::Tdc, 0.9);
        let mut tr = TraceState::zeros(1, 1);
        backward_step(&c, &Transition::new(vec![1.0], 0, 0.0, vec![1.0], false), 1.0, &mut tr, &v, &h).unwrap();
        assert!(!tr.is_zero());
        let once = reset_traces(tr.clone());
        assert!(once.is_zero());
        assert_eq!(reset_traces(once.clone()), once);
        backward_step(&c, &Transition::new(vec![1.0], 0, 0.0, vec![1.0], true), 1.0, &mut tr, &v, &h).unwrap();
        assert!(tr.is_zero());
    }

    #[test]
    fn linear_agent_matches_general_backward() {
        let x = [[1.0, 0.0, 0.5], [0.0, 1.0, 0.2], [0.3, 0.3, 1.0]];
        for alg in [Algorithm::Td, Algorithm::Gtd2, Algorithm::Tdc, Algorithm::Tdrc] {
            let mut c = cfg(alg, 0.8);
            c.beta = 0.5;
            c.use_is = true;
            c.alpha_theta = Some(0.05);
            let mut fast = LinearAgent::new(c, vec![0.1, -0.3, 0.2]).unwrap();
            let mut agent = PredictionAgent::new(c, lin(&[0.1, -0.3, 0.2]), lin(&[0.0; 3])).unwrap();
            let steps = [(0, 1, 1.0, false, 1.5), (1, 2, -0.5, false, 0.5), (2, 0, 2.0, true, 1.0), (0, 2, 0.0, false, 2.0)];
            for (s, sn, r, term, rho) in steps {
                fast.step(&x[s], r, &x[sn], term, rho).unwrap();
                agent.observe(Transition::new(x[s].to_vec(), 0, r, x[sn].to_vec(), term), rho).unwrap();
            }
            assert!(param::max_abs_diff(&fast.w, agent.v.params().as_slice()) < 1e-14, "{alg:?}");
            assert!(param::max_abs_diff(&fast.theta, agent.h.params().as_slice()) < 1e-14, "{alg:?}");
        }
    }

    #[test]
    fn is_requires_ratios() {
        let mut c = cfg(Algorithm::Tdc, 0.5);
        c.use_is = true;
        let traj = Trajectory::new(vec![Transition::new(vec![1.0], 0, 1.0, vec![0.0], true)], 0.0).unwrap();
        assert!(forward_update(&c, &traj, &lin(&[0.0]), &lin(&[0.0]), None).is_err());
    }
}
