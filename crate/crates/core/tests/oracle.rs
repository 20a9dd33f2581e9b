mod common;

use common::{rng, uniform};
use gradtd::envs::{make_random_mdp, make_random_walk, FeatureMap, MdpSpec, TabularEnv};
use gradtd::oracle::{exact_pbe_lambda, exact_td_lambda_error, exact_values, expected_td_error, stationary_distribution, PolicyTable};
use gradtd::returns::lambda_recursion;
use gradtd::rng::{stream, Stream};
use proptest::prelude::*;

fn random_policy(r: &mut gradtd::rng::Rng, n_states: usize, n_actions: usize) -> PolicyTable {
    let rows = (0..n_states)
        .map(|_| {
            let raw: Vec<f64> = (0..n_actions).map(|_| uniform(r, 0.1, 1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            row[0] += 1.0 - row.iter().sum::<f64>();
            row
        })
        .collect();
    PolicyTable::new(rows).unwrap()
}

/// Three transient states and one terminal, two actions, random dynamics
/// and rewards; every transient state reaches the terminal.
fn small_episodic(r: &mut gradtd::rng::Rng) -> MdpSpec {
    let n = 4;
    let mut p = vec![vec![vec![0.0; n]; 2]; n];
    let mut rew = vec![vec![vec![0.0; n]; 2]; n];
    for s in 0..n {
        for a in 0..2 {
            if s == 3 {
                p[s][a][3] = 1.0;
                continue;
            }
            let raw: Vec<f64> = (0..n).map(|t| uniform(r, 0.1, 1.0) + if t == 3 { 0.3 } else { 0.0 }).collect();
            let total: f64 = raw.iter().sum();
            p[s][a] = raw.iter().map(|x| x / total).collect();
            p[s][a][0] += 1.0 - p[s][a].iter().sum::<f64>();
            rew[s][a] = (0..n).map(|_| uniform(r, -1.0, 1.0)).collect();
        }
    }
    MdpSpec::new(p, rew, vec![0.5, 0.3, 0.2, 0.0], 0.9, [3]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pbe_is_non_negative(seed in any::<u64>(), n in 3usize..8, lambda in 0.0..=1.0f64) {
        let mut r = rng(seed);
        let mdp = make_random_mdp(n, 2, 0.9, seed).unwrap();
        let pi = random_policy(&mut r, n, 2);
        let d = stationary_distribution(&mdp, &pi).unwrap();
        let psi: Vec<Vec<f64>> = (0..n).map(|_| common::random_vec(&mut r, n - 1, 1.0)).collect();
        let v = common::random_vec(&mut r, n, 3.0);
        prop_assert!(exact_pbe_lambda(&mdp, &pi, &d, &psi, &v, lambda).unwrap() >= 0.0);
    }

    #[test]
    fn full_lambda_error_is_the_value_gap(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mdp = small_episodic(&mut r);
        let pi = random_policy(&mut r, 4, 2);
        let v_pi = exact_values(&mdp, &pi).unwrap();
        let mut v_hat = common::random_vec(&mut r, 4, 2.0);
        v_hat[3] = 0.0;
        let err = exact_td_lambda_error(&mdp, &pi, &v_hat, 1.0).unwrap();
        for s in 0..3 {
            prop_assert!((err[s] - (v_pi[s] - v_hat[s])).abs() <= 1e-10);
        }
    }
}

#[test]
fn pbe_vanishes_exactly_when_the_projected_error_does() {
    let (mdp, phi) = make_random_walk(5).unwrap();
    let pi = PolicyTable::uniform(mdp.n_states, 1);
    let d = stationary_distribution(&mdp, &pi).unwrap();
    let v = exact_values(&mdp, &pi).unwrap();
    let rows: Vec<Vec<f64>> = phi.rows().to_vec();
    // terminal rows of the one-hot map are zero, so drop them from ψ via d = 0
    for lambda in [0.0, 0.5, 0.9, 1.0] {
        assert!(exact_pbe_lambda(&mdp, &pi, &d, &rows, &v, lambda).unwrap() <= 1e-20);
    }
    let mut off = v.clone();
    off[3] += 0.1;
    assert!(exact_pbe_lambda(&mdp, &pi, &d, &rows, &off, 0.5).unwrap() > 1e-6);
}

#[test]
fn sampled_lambda_errors_agree_with_the_exact_expectation() {
    let mut r = rng(29);
    let mdp = small_episodic(&mut r);
    let pi = random_policy(&mut r, 4, 2);
    let mut v_hat = common::random_vec(&mut r, 4, 1.0);
    v_hat[3] = 0.0;
    let lambda = 0.7;
    let exact = exact_td_lambda_error(&mdp, &pi, &v_hat, lambda).unwrap();
    let phi = FeatureMap::one_hot(4);
    let mut env = TabularEnv::new(mdp.clone(), phi, stream(29, Stream::Env)).unwrap();
    let mut policy_rng = stream(29, Stream::Agent);
    let (mut sum, mut sum_sq, mut count) = ([0.0; 4], [0.0; 4], [0usize; 4]);
    for _ in 0..100_000 {
        let mut s = env.reset_index();
        let (mut states, mut deltas, mut terminals) = (Vec::new(), Vec::new(), Vec::new());
        loop {
            let a = pi.sample(s, &mut policy_rng);
            let (next, reward, terminal, _) = env.step_index(a).unwrap();
            let boot = if terminal { 0.0 } else { v_hat[next] };
            states.push(s);
            deltas.push(reward + mdp.gamma * boot - v_hat[s]);
            terminals.push(terminal);
            if terminal {
                break;
            }
            s = next;
        }
        for (s, e) in states.iter().zip(lambda_recursion(&deltas, &terminals, mdp.gamma * lambda, None)) {
            sum[*s] += e;
            sum_sq[*s] += e * e;
            count[*s] += 1;
        }
    }
    for s in 0..3 {
        let n = count[s] as f64;
        let mean = sum[s] / n;
        let se = ((sum_sq[s] / n - mean * mean) / n).sqrt();
        assert!((mean - exact[s]).abs() <= 3.0 * se, "state {s}: sampled {mean} ± {se}, exact {}", exact[s]);
    }
}

#[test]
fn visit_frequencies_match_the_stationary_distribution() {
    let n = 5;
    let mdp = make_random_mdp(n, 2, 0.9, 31).unwrap();
    let pi = PolicyTable::uniform(n, 2);
    let d = stationary_distribution(&mdp, &pi).unwrap();
    let mut env = TabularEnv::new(mdp, FeatureMap::one_hot(n), stream(31, Stream::Env)).unwrap();
    let mut policy_rng = stream(31, Stream::Agent);
    // batch means absorb the serial correlation of a single long chain
    let (batches, per_batch) = (100, 1_000);
    let mut freq = vec![vec![0.0; n]; batches];
    let mut s = env.state();
    for row in freq.iter_mut() {
        for _ in 0..per_batch {
            row[s] += 1.0 / per_batch as f64;
            s = env.step_index(pi.sample(s, &mut policy_rng)).unwrap().0;
        }
    }
    let mut chi2 = 0.0;
    for k in 0..n {
        let col: Vec<f64> = freq.iter().map(|row| row[k]).collect();
        let mean = col.iter().sum::<f64>() / batches as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        chi2 += (mean - d[k]).powi(2) / (var / batches as f64);
    }
    // 0.999 quantile of χ² with 5 degrees of freedom
    assert!(chi2 < 20.52, "chi2 {chi2}");
}

#[test]
fn expected_td_error_is_zero_at_the_true_values() {
    let mut r = rng(37);
    let mdp = small_episodic(&mut r);
    let pi = random_policy(&mut r, 4, 2);
    let v = exact_values(&mdp, &pi).unwrap();
    assert!(expected_td_error(&mdp, &pi, &v).unwrap().iter().all(|e| e.abs() < 1e-12));
}
