//! The three-state, two-action discounted example used throughout the
//! test suite and exposed by the `example toy3x2` command.

use crate::geometry::PlaneBasis;
use crate::mdp::{DetPolicy, MdpSpec, QVector, ValidatedMdp};

pub const NAME: &str = "toy3x2";

pub fn spec() -> MdpSpec {
    MdpSpec {
        name: NAME.to_string(),
        gamma: 0.95,
        num_states: 3,
        num_actions: 2,
        transitions: vec![
            vec![
                vec![0.7, 0.2, 0.1],
                vec![0.2, 0.6, 0.2],
                vec![0.1, 0.3, 0.6],
            ],
            vec![
                vec![0.2, 0.5, 0.3],
                vec![0.4, 0.3, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
        ],
        rewards: vec![vec![1.0, 0.2], vec![0.6, 0.0], vec![1.2, 0.3]],
    }
}

pub fn mdp() -> ValidatedMdp {
    spec().validate().expect("built-in example is valid")
}

/// `(1, 1, 1)`.
pub fn optimal_policy() -> DetPolicy {
    DetPolicy::new(vec![0, 0, 0], 2).expect("in range")
}

/// Q* to the four decimals it is usually quoted with, `[s][a]`.
pub const Q_STAR_4DP: [[f64; 2]; 3] = [[18.2229, 17.3026], [17.6194, 17.2172], [18.4947, 17.5430]];

/// The single-trajectory initial condition, `[s][a]`.
pub const Q0_TABLE: [[f64; 2]; 3] = [[19.5495, 16.6292], [17.9460, 17.5438], [18.8213, 17.8696]];

pub fn reference_q0() -> QVector {
    QVector::from_table(&Q0_TABLE.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixed shape")
}

/// `1̂ = 𝟏/√6`, `d̂ = (1,0,0,−1,0,0)/√2`.
pub fn plane_basis() -> PlaneBasis {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PlaneBasis::new(vec![h, 0.0, 0.0, -h, 0.0, 0.0]).expect("orthonormal")
}

pub fn is_toy(mdp: &ValidatedMdp) -> bool {
    mdp.name() == NAME && mdp.num_states() == 3 && mdp.num_actions() == 2
}
