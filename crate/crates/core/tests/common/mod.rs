//! Generators and small oracles shared by the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use qvi_geometry::mdp::{DetPolicy, Matrix, MdpSpec, QVector, ValidatedMdp};

/// Master seed for every seeded property run.
pub const MASTER_SEED: u64 = 0x5eed_2026;

/// Runner with a fixed generator derived from the master seed.
pub fn seeded_runner(cases: u32, salt: u64) -> TestRunner {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&MASTER_SEED.to_le_bytes());
    seed[8..16].copy_from_slice(&salt.to_le_bytes());
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &seed))
}

/// Row-stochastic weights with roughly 30% structural zeros; entries that
/// survive are at least 0.01 before normalization.
pub fn stochastic_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), n).prop_map(move |cells| {
        let mut row: Vec<f64> = cells
            .iter()
            .map(|&(u, w)| if u < 0.3 { 0.0 } else { w })
            .collect();
        if row.iter().all(|&x| x == 0.0) {
            row[0] = 1.0;
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        row
    })
}

pub fn stochastic_matrix(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(stochastic_row(n), n)
        .prop_map(move |rows| Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn stochastic_matrix_any(max_n: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_n).prop_flat_map(stochastic_matrix)
}

pub fn mdp_with(num_states: usize, num_actions: usize) -> impl Strategy<Value = ValidatedMdp> {
    (
        prop::collection::vec(
            prop::collection::vec(stochastic_row(num_states), num_states),
            num_actions,
        ),
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, num_actions), num_states),
        0.5f64..0.95,
    )
        .prop_map(move |(transitions, rewards, gamma)| {
            MdpSpec {
                name: "random".into(),
                gamma,
                num_states,
                num_actions,
                transitions,
                rewards,
            }
            .validate()
            .expect("generated MDP is valid")
        })
}

pub fn mdp_in(
    states: std::ops::RangeInclusive<usize>,
    actions: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = ValidatedMdp> {
    (states, actions).prop_flat_map(|(s, a)| mdp_with(s, a))
}

pub fn q_vector(
    num_states: usize,
    num_actions: usize,
    lo: f64,
    hi: f64,
) -> impl Strategy<Value = QVector> {
    prop::collection::vec(lo..hi, num_states * num_actions)
        .prop_map(move |v| QVector::from_slice(num_states, &v).expect("shape"))
}

pub fn policy(num_states: usize, num_actions: usize) -> impl Strategy<Value = DetPolicy> {
    prop::collection::vec(0..num_actions, num_states)
        .prop_map(move |a| DetPolicy::new(a, num_actions).expect("in range"))
}

/// Two states; action 2 swaps them, so its chain has period 2.
pub fn swap_mdp() -> ValidatedMdp {
    MdpSpec {
        name: "swap".into(),
        gamma: 0.9,
        num_states: 2,
        num_actions: 2,
        transitions: vec![
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ],
        rewards: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    }
    .validate()
    .unwrap()
}

/// Three states; action 2 makes states 1 and 3 absorbing.
pub fn double_absorbing_mdp() -> ValidatedMdp {
    MdpSpec {
        name: "double-absorbing".into(),
        gamma: 0.8,
        num_states: 3,
        num_actions: 2,
        transitions: vec![
            vec![
                vec![0.4, 0.3, 0.3],
                vec![0.3, 0.4, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 0.0, 1.0],
            ],
        ],
        rewards: vec![vec![0.0, 1.0], vec![0.5, 0.2], vec![0.1, 0.9]],
    }
    .validate()
    .unwrap()
}

/// `τ(B) = ½ max_{x,y} Σ|B_x − B_y|` by plain loops.
pub fn dobrushin_oracle(b: &Matrix) -> f64 {
    let n = b.nrows();
    let mut best: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let mut s = 0.0;
            for j in 0..b.ncols() {
                s += (b[(x, j)] - b[(y, j)]).abs();
            }
            best = best.max(0.5 * s);
        }
    }
    best
}

/// Converts a proptest outcome into a one-line summary.
pub fn summarize<T>(
    cases: u32,
    res: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<String, String>
where
    T: std::fmt::Debug,
{
    match res {
        Ok(()) => Ok(format!("{cases} cases")),
        Err(e) => Err(format!("{e}")),
    }
}

pub fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}
