use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use super::mdp::{FeatureKind, FeatureMap, MdpSpec};
use crate::error::{Error, Result};
use crate::oracle::PolicyTable;
use crate::rng::{stream, Stream};

/// Left/right random walk over `n_states` non-terminal states.
///
/// State indices `0` and `n_states + 1` are terminal. Every step moves left
/// or right with probability one half (a single action, so the uniform
/// policy is part of the dynamics). Entering the right end pays `+1`, the
/// left end `−1`; γ = 1. Features are one-hot over the non-terminal states,
/// zero on terminals.
pub fn make_random_walk(n_states: usize) -> Result<(MdpSpec, FeatureMap)> {
    if n_states == 0 || n_states % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "random walk needs an odd number of states, got {n_states}"
        )));
    }
    let total = n_states + 2;
    let right_end = total - 1;
    let mut p = vec![vec![vec![0.0; total]]; total];
    let mut r = vec![vec![vec![0.0; total]]; total];
    for s in 0..total {
        if s == 0 || s == right_end {
            p[s][0][s] = 1.0;
            continue;
        }
        p[s][0][s - 1] = 0.5;
        p[s][0][s + 1] = 0.5;
        if s - 1 == 0 {
            r[s][0][0] = -1.0;
        }
        if s + 1 == right_end {
            r[s][0][right_end] = 1.0;
        }
    }
    let mut start = vec![0.0; total];
    start[total / 2] = 1.0;
    let mdp = MdpSpec::new(p, r, start, 1.0, [0, right_end])?;
    let rows = (0..total)
        .map(|s| {
            let mut f = vec![0.0; n_states];
            if s != 0 && s != right_end {
                f[s - 1] = 1.0;
            }
            f
        })
        .collect();
    Ok((mdp, FeatureMap::new(FeatureKind::OneHot, rows)?))
}

pub const BAIRD_ACTION_DASHED: usize = 0;
pub const BAIRD_ACTION_SOLID: usize = 1;
/// All weights one except the seventh, which is ten.
pub const BAIRD_INITIAL_WEIGHTS: [f64; 8] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0];

/// Baird's seven-state off-policy counterexample.
#[derive(Debug, Clone)]
pub struct Baird {
    pub mdp: MdpSpec,
    pub features: FeatureMap,
    /// Dashed with probability 6/7, solid with 1/7.
    pub behavior: PolicyTable,
    /// Always solid.
    pub target: PolicyTable,
}

/// Baird's counterexample: seven states, zero rewards, γ = 0.99.
///
/// The dashed action jumps uniformly to one of the six upper states, the
/// solid action goes to the seventh (lower) state. Upper state `i` has
/// features `2 e_i + e_8`; the lower state has `e_7 + 2 e_8`.
pub fn make_baird() -> Baird {
    let n = 7;
    let mut p = vec![vec![vec![0.0; n]; 2]; n];
    for row in p.iter_mut() {
        for s_next in 0..6 {
            row[BAIRD_ACTION_DASHED][s_next] = 1.0 / 6.0;
        }
        row[BAIRD_ACTION_SOLID][6] = 1.0;
    }
    let r = vec![vec![vec![0.0; n]; 2]; n];
    let mdp = MdpSpec::new(p, r, vec![1.0 / 7.0; n], 0.99, []).expect("Baird MDP is valid");
    let rows = (0..n)
        .map(|s| {
            let mut f = vec![0.0; 8];
            if s < 6 {
                f[s] = 2.0;
                f[7] = 1.0;
            } else {
                f[6] = 1.0;
                f[7] = 2.0;
            }
            f
        })
        .collect();
    let features = FeatureMap::new(FeatureKind::Baird, rows).expect("rows share a dimension");
    let behavior = PolicyTable::new(vec![vec![6.0 / 7.0, 1.0 / 7.0]; n]).expect("valid policy");
    let target = PolicyTable::new(vec![vec![0.0, 1.0]; n]).expect("valid policy");
    Baird {
        mdp,
        features,
        behavior,
        target,
    }
}

/// Boyan's 13-state chain with 4-dimensional interpolating features.
///
/// From state `s ≥ 2` the chain moves to `s−1` or `s−2` with equal
/// probability and reward −3; state 1 moves to the terminal state 0 with
/// reward −2. Episodes start in state 12; γ = 1. Features interpolate
/// linearly between the anchors at states 12, 8, 4 and 0.
pub fn make_boyan() -> (MdpSpec, FeatureMap) {
    let n = 13;
    let mut p = vec![vec![vec![0.0; n]]; n];
    let mut r = vec![vec![vec![0.0; n]]; n];
    p[0][0][0] = 1.0;
    p[1][0][0] = 1.0;
    r[1][0][0] = -2.0;
    for s in 2..n {
        p[s][0][s - 1] = 0.5;
        p[s][0][s - 2] = 0.5;
        r[s][0][s - 1] = -3.0;
        r[s][0][s - 2] = -3.0;
    }
    let mut start = vec![0.0; n];
    start[12] = 1.0;
    let mdp = MdpSpec::new(p, r, start, 1.0, [0]).expect("Boyan chain is valid");
    let rows = (0..n)
        .map(|s| {
            let pos = (12 - s) as f64 / 4.0;
            let k = (pos.floor() as usize).min(3);
            let frac = pos - k as f64;
            let mut f = vec![0.0; 4];
            f[k] = 1.0 - frac;
            if frac > 0.0 {
                f[k + 1] = frac;
            }
            f
        })
        .collect();
    (mdp, FeatureMap::new(FeatureKind::BoyanInterpolation, rows).expect("4-dim rows"))
}

/// Deterministic `size × size` grid: actions up, right, down, left; bumping
/// a wall stays in place. Every step costs −1; the bottom-right corner is
/// the terminal goal and episodes start in the top-left corner.
pub fn make_gridworld(size: usize, gamma: f64) -> Result<(MdpSpec, FeatureMap)> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!("gridworld size must be ≥ 2, got {size}")));
    }
    let n = size * size;
    let goal = n - 1;
    let mut p = vec![vec![vec![0.0; n]; 4]; n];
    let mut r = vec![vec![vec![0.0; n]; 4]; n];
    for s in 0..n {
        let (row, col) = (s / size, s % size);
        for a in 0..4 {
            if s == goal {
                p[s][a][s] = 1.0;
                continue;
            }
            let (nr, nc) = match a {
                0 => (row.saturating_sub(1), col),
                1 => (row, (col + 1).min(size - 1)),
                2 => ((row + 1).min(size - 1), col),
                _ => (row, col.saturating_sub(1)),
            };
            let next = nr * size + nc;
            p[s][a][next] = 1.0;
            r[s][a][next] = -1.0;
        }
    }
    let mut start = vec![0.0; n];
    start[0] = 1.0;
    let mdp = MdpSpec::new(p, r, start, gamma, [goal])?;
    Ok((mdp, FeatureMap::one_hot(n)))
}

/// Continuing MDP with Dirichlet(1) transition rows, uniform [0, 1] rewards
/// and a uniform start distribution, reproducible from `seed`.
pub fn make_random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<MdpSpec> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("random MDP needs states and actions".into()));
    }
    let mut rng = stream(seed, Stream::Data);
    let mut p = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut r = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let draws: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
            // absorb rounding so the row sums to one within tolerance
            let residual = 1.0 - row.iter().sum::<f64>();
            row[0] += residual;
            p[s][a] = row;
            for v in r[s][a].iter_mut() {
                *v = rng.random::<f64>();
            }
        }
    }
    MdpSpec::new(p, r, vec![1.0 / n_states as f64; n_states], gamma, [])
}
