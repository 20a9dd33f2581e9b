mod common;

use common::{max_abs_diff, ratios, rng, scaled_diff};
use gradtd::control::{qrc_step, ControlAlgorithm, ControlConfig};
use gradtd::oracle::{forward_total_update, FrozenStep};
use gradtd::prediction::{backward_step, forward_update, one_step_update, Algorithm, PredictionConfig, TraceState, Update, View};
use gradtd::{Approximator, TdMode, Trajectory, Transition};
use proptest::prelude::*;
use rand::Rng as _;

const ALGORITHMS: [Algorithm; 4] = [Algorithm::Td, Algorithm::Gtd2, Algorithm::Tdc, Algorithm::Tdrc];

fn frozen_steps(traj: &Trajectory, v: &Approximator, h: &Approximator, gamma: f64, rho: &[f64]) -> Vec<FrozenStep> {
    traj.transitions()
        .iter()
        .zip(rho)
        .map(|(tr, r)| FrozenStep {
            delta: v.td_error(tr, gamma, TdMode::StateValue).unwrap(),
            grad_delta: v.grad_td_error(tr, gamma, TdMode::StateValue).unwrap().into_inner(),
            value_grad: v.grad_value(&tr.state).unwrap().into_inner(),
            h: h.value(&tr.state).unwrap(),
            h_grad: h.grad_value(&tr.state).unwrap().into_inner(),
            rho: *r,
        })
        .collect()
}

fn backward_total(cfg: &PredictionConfig, traj: &Trajectory, rho: &[f64], v: &Approximator, h: &Approximator) -> Update {
    let mut traces = TraceState::zeros(v.num_params(), h.num_params());
    let mut total = Update::zeros(v.num_params(), h.num_params());
    for (tr, r) in traj.transitions().iter().zip(rho) {
        total.add(&backward_step(cfg, tr, *r, &mut traces, v, h).unwrap());
    }
    total
}

fn config(alg: Algorithm, lambda: f64, gamma: f64, beta: f64) -> PredictionConfig {
    let mut cfg = PredictionConfig::new(alg, View::Forward, lambda, gamma, 0.1);
    cfg.beta = beta;
    cfg.use_is = true;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn forward_update_matches_explicit_expansion(
        seed in any::<u64>(), len in 1usize..=20, alg_i in 0usize..4, lambda in 0.0..=1.0f64, gamma in 0.0..=1.0f64,
        beta in 0.0..2.0f64, use_mlp in any::<bool>()
    ) {
        let mut r = rng(seed);
        let (v, h) = if use_mlp { (common::mlp(&mut r, 3, 1), common::mlp(&mut r, 3, 1)) } else { (common::linear(&mut r, 3, 1), common::linear(&mut r, 3, 1)) };
        let traj = common::episode(&mut r, len, 3);
        let rho = ratios(&mut r, len);
        let cfg = config(ALGORITHMS[alg_i], lambda, gamma, beta);
        let fwd = forward_update(&cfg, &traj, &v, &h, Some(&rho)).unwrap();
        let (tw, tt) = forward_total_update(&frozen_steps(&traj, &v, &h, gamma, &rho), cfg.algorithm, gamma * lambda, cfg.effective_beta(), h.params().as_slice());
        prop_assert!(scaled_diff(&fwd.dw, &tw) <= 1e-10);
        if cfg.algorithm.uses_h() {
            prop_assert!(scaled_diff(&fwd.dtheta, &tt) <= 1e-10);
        }
    }

    #[test]
    fn forward_and_backward_totals_agree(
        seed in any::<u64>(), len in 1usize..=20, alg_i in 1usize..4, lambda in 0.0..=1.0f64, use_is in any::<bool>(), use_mlp in any::<bool>()
    ) {
        let mut r = rng(seed);
        let (v, h) = if use_mlp { (common::mlp(&mut r, 4, 1), common::mlp(&mut r, 4, 1)) } else { (common::linear(&mut r, 4, 1), common::linear(&mut r, 4, 1)) };
        let traj = common::episode(&mut r, len, 4);
        let rho = if use_is { ratios(&mut r, len) } else { vec![1.0; len] };
        let mut cfg = config(ALGORITHMS[alg_i], lambda, 0.9, 1.0);
        cfg.use_is = use_is;
        let fwd = forward_update(&cfg, &traj, &v, &h, Some(&rho)).unwrap();
        let bwd = backward_total(&cfg, &traj, &rho, &v, &h);
        prop_assert!(max_abs_diff(&fwd.dw, &bwd.dw) <= 1e-9);
        prop_assert!(max_abs_diff(&fwd.dtheta, &bwd.dtheta) <= 1e-9);
    }

    #[test]
    fn tdrc_without_regularisation_is_tdc(seed in any::<u64>(), len in 1usize..=15, lambda in 0.0..=1.0f64) {
        let mut r = rng(seed);
        let (v, h) = (common::mlp(&mut r, 3, 1), common::mlp(&mut r, 3, 1));
        let traj = common::episode(&mut r, len, 3);
        let rho = ratios(&mut r, len);
        let tdc = config(Algorithm::Tdc, lambda, 0.9, 0.0);
        let tdrc = config(Algorithm::Tdrc, lambda, 0.9, 0.0);
        prop_assert_eq!(forward_update(&tdc, &traj, &v, &h, Some(&rho)).unwrap(), forward_update(&tdrc, &traj, &v, &h, Some(&rho)).unwrap());
        prop_assert_eq!(backward_total(&tdc, &traj, &rho, &v, &h), backward_total(&tdrc, &traj, &rho, &v, &h));
    }

    #[test]
    fn lambda_zero_forward_is_the_one_step_update(seed in any::<u64>(), alg_i in 0usize..4, terminal in any::<bool>(), beta in 0.0..2.0f64) {
        let mut r = rng(seed);
        let (v, h) = (common::mlp(&mut r, 3, 1), common::mlp(&mut r, 3, 1));
        let tr = Transition::new(common::random_vec(&mut r, 3, 1.0), 0, 0.7, common::random_vec(&mut r, 3, 1.0), terminal);
        let mut cfg = config(ALGORITHMS[alg_i], 0.0, 0.9, beta);
        cfg.use_is = false;
        let traj = Trajectory::new(vec![tr.clone()], 0.0).unwrap();
        prop_assert_eq!(forward_update(&cfg, &traj, &v, &h, None).unwrap(), one_step_update(&cfg, &tr, &v, &h).unwrap());
    }

    #[test]
    fn q_lambda_greedy_prefix_matches_forward_view(seed in any::<u64>(), len in 1usize..=15, lambda in 0.0..=1.0f64) {
        let mut r = rng(seed);
        let n_states = 6;
        let mut q = Approximator::tabular(n_states, 3);
        q.set_params(&common::random_vec(&mut r, n_states * 3, 1.0)).unwrap();
        let h = Approximator::tabular(n_states, 3);
        let one_hot = |s: usize| (0..n_states).map(|j| f64::from(u8::from(s == j))).collect::<Vec<f64>>();
        let mut s = r.random_range(0..n_states);
        let trs: Vec<Transition> = (0..len)
            .map(|t| {
                let next = r.random_range(0..n_states);
                let tr = Transition::new(one_hot(s), r.random_range(0..3), common::uniform(&mut r, -1.0, 1.0), one_hot(next), t + 1 == len);
                s = next;
                tr
            })
            .collect();
        let mut cfg = ControlConfig::defaults(ControlAlgorithm::QLambda, 0.9);
        cfg.lambda = lambda;
        let mut traces = TraceState::zeros(q.num_params(), h.num_params());
        let mut backward = vec![0.0; q.num_params()];
        for tr in &trs {
            let u = qrc_step(&cfg, tr, true, &mut traces, &q, &h).unwrap();
            for (b, d) in backward.iter_mut().zip(u.dw.iter()) {
                *b += d;
            }
        }
        let deltas: Vec<f64> = trs.iter().map(|t| q.td_error(t, 0.9, TdMode::MaxQ).unwrap()).collect();
        let mut forward = vec![0.0; q.num_params()];
        for t in 0..len {
            let err: f64 = (t..len).map(|k| (0.9 * lambda).powi((k - t) as i32) * deltas[k]).sum();
            let (_, g) = q.output_and_grad(&trs[t].state, trs[t].action).unwrap();
            for (f, gi) in forward.iter_mut().zip(g.iter()) {
                *f += err * gi;
            }
        }
        prop_assert!(max_abs_diff(&backward, &forward) <= 1e-9);
    }
}

#[test]
fn traces_reset_after_terminal_and_after_exploration() {
    let mut r = rng(23);
    let q = common::linear(&mut r, 3, 2);
    let h = common::linear(&mut r, 3, 2);
    let cfg = ControlConfig::defaults(ControlAlgorithm::Qrc, 0.9);
    let tr = Transition::new(vec![1.0, 0.5, -0.5], 1, 1.0, vec![0.2, 0.1, 0.0], false);
    let mut traces = TraceState::zeros(q.num_params(), h.num_params());
    qrc_step(&cfg, &tr, true, &mut traces, &q, &h).unwrap();
    assert!(!traces.is_zero());
    qrc_step(&cfg, &tr, false, &mut traces, &q, &h).unwrap();
    assert!(traces.is_zero());
    qrc_step(&cfg, &Transition { terminal: true, ..tr.clone() }, true, &mut traces, &q, &h).unwrap();
    assert!(traces.is_zero());
}
