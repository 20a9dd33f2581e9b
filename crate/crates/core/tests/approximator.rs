mod common;

use common::{finite_difference, random_vec, rng, scaled_diff};
use gradtd::approximator::argmax;
use gradtd::{Activation, Approximator, TdMode, Transition};
use proptest::prelude::*;
use rand::Rng as _;

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    (0..n).map(|j| f64::from(u8::from(i == j))).collect()
}

/// Max relative error between analytic and central-difference gradients
/// over 100 random (parameters, input) pairs.
fn fd_error(make: impl Fn(&mut gradtd::rng::Rng) -> (Approximator, Vec<f64>)) -> f64 {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, x) = make(&mut r);
        let params = a.params().as_slice().to_vec();
        for head in 0..a.outputs() {
            let (_, g) = a.output_and_grad(&x, head).unwrap();
            let mut probe = a.clone();
            let fd = finite_difference(&params, 1e-6, |p| {
                probe.set_params(p).unwrap();
                probe.forward(&x).unwrap()[head]
            });
            worst = worst.max(scaled_diff(&g, &fd));
        }
    }
    worst
}

#[test]
fn every_kind_matches_finite_differences() {
    let tab = fd_error(|r| {
        let mut a = Approximator::tabular(5, 3);
        let p = random_vec(r, a.num_params(), 2.0);
        a.set_params(&p).unwrap();
        let s = r.random_range(0..5);
        (a, one_hot(5, s))
    });
    let lin = fd_error(|r| (common::linear(r, 4, 2), random_vec(r, 4, 2.0)));
    let tanh = fd_error(|r| (Approximator::mlp(4, &[8, 8], 2, Activation::Tanh, 1.0, r), random_vec(r, 4, 2.0)));
    let relu = fd_error(|r| (Approximator::mlp(4, &[8, 8], 2, Activation::Relu, 1.0, r), random_vec(r, 4, 2.0)));
    for (name, e) in [("tabular", tab), ("linear", lin), ("tanh", tanh), ("relu", relu)] {
        assert!(e <= 1e-5, "{name}: relative error {e:e}");
    }
}

#[test]
fn tabular_gradient_is_one_hot_and_linear_gradient_is_the_input() {
    let mut r = rng(5);
    let mut tab = Approximator::tabular(4, 2);
    tab.set_params(&random_vec(&mut r, 8, 1.0)).unwrap();
    let (_, g) = tab.output_and_grad(&one_hot(4, 2), 1).unwrap();
    let nonzero: Vec<usize> = g.iter().enumerate().filter(|p| *p.1 != 0.0).map(|p| p.0).collect();
    assert_eq!(nonzero.len(), 1);
    assert_eq!(g[nonzero[0]], 1.0);

    // head k of a linear map has gradient x in block k, zero elsewhere, whatever the weights
    let x = random_vec(&mut r, 3, 1.0);
    let a = common::linear(&mut r, 3, 2);
    let b = common::linear(&mut r, 3, 2);
    let (_, ga) = a.output_and_grad(&x, 1).unwrap();
    assert_eq!(ga, b.output_and_grad(&x, 1).unwrap().1);
    assert_eq!(&ga[..3], &[0.0; 3]);
    assert_eq!(&ga[3..], x.as_slice());
}

#[test]
fn max_action_ties_go_to_the_lowest_index() {
    assert_eq!(argmax(&[1.0, 3.0, 3.0, 0.0]), 1);
    let mut q = Approximator::tabular(2, 3);
    q.set_params(&[0.0, 0.0, 2.0, 2.0, 2.0, 1.0]).unwrap();
    let x = one_hot(2, 0);
    let first = q.grad_max_action_value(&x).unwrap();
    for _ in 0..5 {
        assert_eq!(q.grad_max_action_value(&x).unwrap(), first);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn td_error_gradient_composes_value_gradients(seed in any::<u64>(), gamma in 0.0..1.0f64, terminal in any::<bool>()) {
        let mut r = rng(seed);
        let v = common::mlp(&mut r, 3, 1);
        let tr = Transition::new(random_vec(&mut r, 3, 1.0), 0, 0.5, random_vec(&mut r, 3, 1.0), terminal);
        let g = v.grad_td_error(&tr, gamma, TdMode::StateValue).unwrap();
        let cur = v.grad_value(&tr.state).unwrap();
        let next = v.grad_value(&tr.next_state).unwrap();
        for i in 0..g.len() {
            let boot = if terminal { 0.0 } else { gamma * next[i] };
            prop_assert!((g[i] - (boot - cur[i])).abs() <= 1e-15);
        }
    }

    #[test]
    fn max_q_td_error_gradient_uses_the_greedy_head(seed in any::<u64>(), gamma in 0.0..1.0f64) {
        let mut r = rng(seed);
        let q = common::mlp(&mut r, 3, 3);
        let tr = Transition::new(random_vec(&mut r, 3, 1.0), 1, 0.5, random_vec(&mut r, 3, 1.0), false);
        let g = q.grad_td_error(&tr, gamma, TdMode::MaxQ).unwrap();
        let (_, cur) = q.output_and_grad(&tr.state, 1).unwrap();
        let greedy = argmax(&q.action_values(&tr.next_state).unwrap());
        let (_, next) = q.output_and_grad(&tr.next_state, greedy).unwrap();
        for i in 0..g.len() {
            prop_assert!((g[i] - (gamma * next[i] - cur[i])).abs() <= 1e-15);
        }
    }
}
