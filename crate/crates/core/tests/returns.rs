mod common;

use common::{ratios, rng, scaled_diff};
use gradtd::returns::{
    lambda_recursion, lambda_return_truncated, n_step_return, td_errors, td_lambda_error_and_grad, td_lambda_error_sequence,
};
use gradtd::{TdMode, Trajectory};
use proptest::prelude::*;

/// `Σ_k (γλ)^k (Π ρ) δ_{t+k}` written out, stopping after a terminal.
fn explicit_sum(deltas: &[f64], terminals: &[bool], gl: f64, rho: &[f64]) -> Vec<f64> {
    (0..deltas.len())
        .map(|t| {
            let (mut acc, mut w) = (0.0, 1.0);
            for k in t..deltas.len() {
                w *= rho[k];
                acc += w * deltas[k];
                if terminals[k] {
                    break;
                }
                w *= gl;
            }
            acc
        })
        .collect()
}

/// Truncated λ-return as a mixture of n-step returns:
/// `(1−λ) Σ_{n<h} λ^{n−1} G^(n) + λ^{h−1} G^(h)` with horizon `h = T − t`.
fn mixture_lambda_return(traj: &Trajectory, t: usize, gamma: f64, lambda: f64, v: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = traj.len() - t;
    let mut g = 0.0;
    for n in 1..h {
        g += (1.0 - lambda) * lambda.powi(n as i32 - 1) * n_step_return(traj, t, n, gamma, v).unwrap();
    }
    g + lambda.powi(h as i32 - 1) * n_step_return(traj, t, h, gamma, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lambda_return_minus_value_is_the_lambda_error(
        seed in any::<u64>(), len in 1usize..12, gamma in 0.0..=1.0f64, lambda in 0.0..=1.0f64, end_terminal in any::<bool>()
    ) {
        let mut r = rng(seed);
        let v_net = common::linear(&mut r, 3, 1);
        let v = |x: &[f64]| v_net.value(x).unwrap();
        let trs = common::random_transitions(&mut r, len, 3, 0.2, end_terminal);
        let traj = Trajectory::bootstrapped(trs, v).unwrap();
        let errs = td_lambda_error_sequence(&traj, gamma, lambda, v);
        for t in 0..len {
            let g = mixture_lambda_return(&traj, t, gamma, lambda, &v);
            let s = v(&traj.transitions()[t].state);
            prop_assert!(((g - s) - errs[t]).abs() <= 1e-12 * g.abs().max(1.0), "t {t}: {} vs {}", g - s, errs[t]);
            let via_api = lambda_return_truncated(&traj, t, gamma, lambda, v).unwrap();
            prop_assert!((via_api - g).abs() <= 1e-12 * g.abs().max(1.0));
        }
    }

    #[test]
    fn recursion_matches_geometric_sum(
        seed in any::<u64>(), len in 1usize..=10, gl in 0.0..=1.0f64, with_is in any::<bool>()
    ) {
        let mut r = rng(seed);
        let deltas = common::random_vec(&mut r, len, 2.0);
        let terminals: Vec<bool> = common::random_transitions(&mut r, len, 1, 0.3, false).iter().map(|t| t.terminal).collect();
        let rho = if with_is { ratios(&mut r, len) } else { vec![1.0; len] };
        let rec = lambda_recursion(&deltas, &terminals, gl, with_is.then_some(rho.as_slice()));
        let sum = explicit_sum(&deltas, &terminals, gl, &rho);
        prop_assert!(scaled_diff(&rec, &sum) <= 1e-12);
    }

    #[test]
    fn gradient_recursion_matches_sum_of_delta_gradients(
        seed in any::<u64>(), len in 1usize..=15, gamma in 0.0..=1.0f64, lambda in 0.0..=1.0f64, use_mlp in any::<bool>()
    ) {
        let mut r = rng(seed);
        let v = if use_mlp { common::mlp(&mut r, 3, 1) } else { common::linear(&mut r, 3, 1) };
        let trs = common::random_transitions(&mut r, len, 3, 0.2, true);
        let rho = ratios(&mut r, len);
        let traj = Trajectory::new(trs.clone(), 0.0).unwrap();
        let out = td_lambda_error_and_grad(&traj, &v, gamma, lambda, Some(&rho)).unwrap();
        let terminals: Vec<bool> = trs.iter().map(|t| t.terminal).collect();
        let grads: Vec<Vec<f64>> = trs.iter().map(|t| v.grad_td_error(t, gamma, TdMode::StateValue).unwrap().into_inner()).collect();
        for j in 0..v.num_params() {
            let column: Vec<f64> = grads.iter().map(|g| g[j]).collect();
            let sum = explicit_sum(&column, &terminals, gamma * lambda, &rho);
            let rec: Vec<f64> = out.error_grads.iter().map(|g| g[j]).collect();
            prop_assert!(scaled_diff(&rec, &sum) <= 1e-10);
        }
        let deltas: Vec<f64> = trs.iter().map(|t| v.td_error(t, gamma, TdMode::StateValue).unwrap()).collect();
        prop_assert!(scaled_diff(&out.errors, &explicit_sum(&deltas, &terminals, gamma * lambda, &rho)) <= 1e-12);
    }

    #[test]
    fn carry_stops_at_terminals(seed in any::<u64>(), len in 2usize..12, cut in 0usize..10) {
        let mut r = rng(seed);
        let cut = cut % (len - 1);
        let mut trs = common::random_transitions(&mut r, len, 2, 0.0, false);
        trs[cut].terminal = true;
        let v_net = common::linear(&mut r, 2, 1);
        let v = |x: &[f64]| v_net.value(x).unwrap();
        let before = td_lambda_error_sequence(&Trajectory::new(trs.clone(), 0.3).unwrap(), 0.9, 0.8, v);
        for tr in &mut trs[cut + 1..] {
            tr.reward += 10.0;
        }
        let after = td_lambda_error_sequence(&Trajectory::new(trs, 0.3).unwrap(), 0.9, 0.8, v);
        prop_assert_eq!(&before[..=cut], &after[..=cut]);
    }
}

#[test]
fn full_episode_lambda_one_is_the_monte_carlo_return() {
    let mut r = rng(17);
    for _ in 0..50 {
        let traj = common::episode(&mut r, 12, 3);
        let v_net = common::mlp(&mut r, 3, 1);
        let v = |x: &[f64]| v_net.value(x).unwrap();
        let gamma = 0.95;
        for t in 0..traj.len() {
            let mc: f64 = traj.transitions()[t..].iter().rev().fold(0.0, |g, tr| tr.reward + gamma * g);
            let g = lambda_return_truncated(&traj, t, gamma, 1.0, v).unwrap();
            assert!((g - mc).abs() <= 1e-12, "t {t}: {g} vs {mc}");
        }
    }
}

#[test]
fn td_errors_bootstrap_from_the_trajectory_tail() {
    let mut r = rng(19);
    let trs = common::random_transitions(&mut r, 4, 2, 0.0, false);
    let v = |_: &[f64]| 1.0;
    let traj = Trajectory::new(trs.clone(), 5.0).unwrap();
    let d = td_errors(&traj, 0.5, v);
    assert_eq!(d[3], trs[3].reward + 0.5 * 5.0 - 1.0);
    assert_eq!(d[0], trs[0].reward + 0.5 - 1.0);
}
