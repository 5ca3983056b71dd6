//! Bellman operator, Q* by value iteration, optimal action sets and POSS
//! membership.

use crate::error::{Error, Result};
use crate::mdp::{cartesian_policies, greedy_policy, DetPolicy, QVector, ValidatedMdp, Vector};

/// `(FQ)(s,a) = R(s,a) + γ Σ_{s'} P(s'|s,a) max_{a'} Q(s',a')`.
pub fn bellman_apply(mdp: &ValidatedMdp, q: &QVector) -> QVector {
    let v = q.state_values();
    let out = mdp.reward_vector() + mdp.stacked() * v * mdp.gamma();
    QVector::from_vector(mdp.num_states(), out).expect("shape preserved")
}

/// Default threshold for optimal-set membership.
pub fn default_tol_opt(q_star: &QVector) -> f64 {
    (1e-6 * q_star.values().amax()).max(1e-8)
}

/// Everything known about the optimal solution.
#[derive(Debug, Clone)]
pub struct OptimalityReport {
    pub q_star: QVector,
    pub v_star: Vector,
    /// Optimal actions per state, 0-based, ascending.
    pub phi_star: Vec<Vec<usize>>,
    /// States where some action is strictly suboptimal.
    pub s_sep: Vec<usize>,
    /// `(state, Δ̄_s)` for each separated state.
    pub delta_bar_per_state: Vec<(usize, f64)>,
    /// Minimum gap; `None` when no state is separated.
    pub delta_bar: Option<f64>,
    pub tol: f64,
    pub tol_opt: f64,
    pub iterations: usize,
    /// Final `‖Q_{k+1} − Q_k‖∞`.
    pub residual: f64,
    pub warnings: Vec<String>,
}

impl OptimalityReport {
    /// Builds the report from an externally supplied Q*.
    pub fn from_q_star(q_star: QVector, tol_opt: f64) -> Self {
        let (phi_star, s_sep, warning) = optimal_action_sets(&q_star, tol_opt);
        let v_star = q_star.state_values();
        let delta_bar_per_state: Vec<(usize, f64)> = s_sep
            .iter()
            .map(|&s| {
                let best_other = (0..q_star.num_actions())
                    .filter(|a| !phi_star[s].contains(a))
                    .map(|a| q_star.get(s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                (s, v_star[s] - best_other)
            })
            .collect();
        let delta_bar = delta_bar_per_state.iter().map(|&(_, d)| d).reduce(f64::min);
        Self {
            q_star,
            v_star,
            phi_star,
            s_sep,
            delta_bar_per_state,
            delta_bar,
            tol: 0.0,
            tol_opt,
            iterations: 0,
            residual: 0.0,
            warnings: warning.into_iter().collect(),
        }
    }

    pub fn is_unique_optimal(&self) -> bool {
        self.phi_star.iter().all(|set| set.len() == 1)
    }
}

/// Value iteration from `Q₀ = 0`, stopped by the a-posteriori bound
/// `γ/(1−γ)·‖Q_{k+1} − Q_k‖∞ ≤ tol`, which certifies the returned iterate
/// is within `tol` of Q* in the max norm.
pub fn solve_qstar(mdp: &ValidatedMdp, tol: f64, max_iter: usize) -> Result<OptimalityReport> {
    solve_qstar_with(mdp, tol, max_iter, None)
}

pub fn solve_qstar_with(
    mdp: &ValidatedMdp,
    tol: f64,
    max_iter: usize,
    tol_opt: Option<f64>,
) -> Result<OptimalityReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be > 0 (got {tol})"
        )));
    }
    let gamma = mdp.gamma();
    let factor = gamma / (1.0 - gamma);
    let mut q = QVector::zeros(mdp.num_states(), mdp.num_actions());
    let mut residual = f64::INFINITY;
    for k in 1..=max_iter {
        let next = bellman_apply(mdp, &q);
        residual = next.max_abs_diff(&q);
        q = next;
        if factor * residual <= tol {
            let tol_opt = tol_opt.unwrap_or_else(|| default_tol_opt(&q));
            let mut report = OptimalityReport::from_q_star(q, tol_opt);
            report.tol = tol;
            report.iterations = k;
            report.residual = residual;
            return Ok(report);
        }
    }
    Err(Error::MaxIterExceeded {
        iterations: max_iter,
        residual,
    })
}

/// `a ∈ Φ*(s)` iff `V*(s) − Q*(s,a) ≤ tol_opt`. Returns the sets, the
/// separated states, and a warning when no state is separated.
pub fn optimal_action_sets(
    q_star: &QVector,
    tol_opt: f64,
) -> (Vec<Vec<usize>>, Vec<usize>, Option<String>) {
    let na = q_star.num_actions();
    let phi: Vec<Vec<usize>> = (0..q_star.num_states())
        .map(|s| {
            let v = q_star.state_max(s);
            (0..na)
                .filter(|&a| v - q_star.get(s, a) <= tol_opt)
                .collect()
        })
        .collect();
    let s_sep: Vec<usize> = phi
        .iter()
        .enumerate()
        .filter(|(_, set)| set.len() < na)
        .map(|(s, _)| s)
        .collect();
    let warning = s_sep.is_empty().then(|| {
        "every action is optimal at every state; policy identification is trivial and the tube radius is undefined".to_string()
    });
    (phi, s_sep, warning)
}

/// True iff the tie-broken greedy policy of `q` is optimal.
pub fn poss_contains(report: &OptimalityReport, q: &QVector) -> bool {
    greedy_in_optimal_set(&report.phi_star, &greedy_policy(q, 0.0))
}

pub fn greedy_in_optimal_set(phi_star: &[Vec<usize>], policy: &DetPolicy) -> bool {
    policy
        .actions()
        .iter()
        .zip(phi_star)
        .all(|(a, set)| set.contains(a))
}

/// `Θ* = Π_s Φ*(s)` in lexicographic order.
pub fn enumerate_optimal_policies(phi_star: &[Vec<usize>], cap: u128) -> Result<Vec<DetPolicy>> {
    cartesian_policies(phi_star, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{policy_kernel, MdpSpec};
    use crate::toy;

    fn one_state() -> ValidatedMdp {
        MdpSpec {
            name: "one".into(),
            gamma: 0.5,
            num_states: 1,
            num_actions: 1,
            transitions: vec![vec![vec![1.0]]],
            rewards: vec![vec![1.0]],
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn one_state_bellman_and_fixed_point() {
        let m = one_state();
        let q = bellman_apply(&m, &QVector::zeros(1, 1));
        assert_eq!(q.as_slice(), &[1.0]);
        let r = solve_qstar(&m, 1e-12, 10_000).unwrap();
        assert!((r.q_star.get(0, 0) - 2.0).abs() < 1e-12);
        assert!(r.s_sep.is_empty());
        assert!(r.delta_bar.is_none());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn toy_printed_values() {
        let m = toy::mdp();
        let r = solve_qstar(&m, 1e-9, 10_000).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((r.q_star.get(s, a) - toy::Q_STAR_4DP[s][a]).abs() < 1e-3);
            }
        }
        assert!((r.delta_bar.unwrap() - 0.4022).abs() < 1e-3);
        assert_eq!(r.phi_star, vec![vec![0], vec![0], vec![0]]);
        assert_eq!(r.s_sep, vec![0, 1, 2]);
        let fq = bellman_apply(&m, &r.q_star);
        assert!(fq.max_abs_diff(&r.q_star) <= 1e-9);
        for s in 0..3 {
            assert_eq!(r.v_star[s], r.q_star.state_max(s));
        }
    }

    #[test]
    fn shift_along_ones_is_scaled_by_gamma() {
        let m = toy::mdp();
        let r = solve_qstar(&m, 1e-11, 10_000).unwrap();
        let alpha = 2.5;
        let out = bellman_apply(&m, &r.q_star.shifted(alpha));
        let expected = r.q_star.shifted(0.95 * alpha);
        assert!(out.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn max_iter_reports_residual() {
        match solve_qstar(&toy::mdp(), 1e-9, 3) {
            Err(Error::MaxIterExceeded {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(solve_qstar(&toy::mdp(), 0.0, 3).is_err());
    }

    #[test]
    fn coarse_tol_opt_merges_actions() {
        let r = solve_qstar(&toy::mdp(), 1e-9, 10_000).unwrap();
        let (phi, sep, warn) = optimal_action_sets(&r.q_star, 0.5);
        // per-state gaps are 0.9203, 0.4022, 0.9517: only state 2 merges
        assert_eq!(phi, vec![vec![0], vec![0, 1], vec![0]]);
        assert_eq!(sep, vec![0, 2]);
        assert!(warn.is_none());
        let (phi, sep, warn) = optimal_action_sets(&r.q_star, 1.0);
        assert!(phi.iter().all(|p| p == &vec![0, 1]));
        assert!(sep.is_empty());
        assert!(warn.is_some());
    }

    #[test]
    fn duplicated_actions_are_both_optimal() {
        let mut spec = toy::spec();
        spec.transitions[1] = spec.transitions[0].clone();
        for row in &mut spec.rewards {
            row[1] = row[0];
        }
        let r = solve_qstar(&spec.validate().unwrap(), 1e-10, 10_000).unwrap();
        assert!(r.phi_star.iter().all(|p| p == &vec![0, 1]));
        assert_eq!(
            enumerate_optimal_policies(&r.phi_star, 100).unwrap().len(),
            8
        );
    }

    #[test]
    fn poss_membership() {
        let r = solve_qstar(&toy::mdp(), 1e-10, 10_000).unwrap();
        assert!(poss_contains(&r, &r.q_star.shifted(3.0)));
        assert!(poss_contains(&r, &toy::reference_q0()));
        let mut q = r.q_star.clone();
        q.set(1, 1, q.get(1, 1) + 2.0 * r.delta_bar.unwrap());
        assert!(!poss_contains(&r, &q));
    }

    #[test]
    fn optimal_policy_enumeration() {
        let r = solve_qstar(&toy::mdp(), 1e-10, 10_000).unwrap();
        let pols = enumerate_optimal_policies(&r.phi_star, 100).unwrap();
        assert_eq!(pols, vec![toy::optimal_policy()]);
        assert_eq!(
            enumerate_optimal_policies(&[vec![0, 1], vec![0, 1]], 100)
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            enumerate_optimal_policies(&[vec![0, 1], vec![0]], 100)
                .unwrap()
                .len(),
            2
        );
        assert!(enumerate_optimal_policies(&[vec![0, 1], vec![0, 1]], 3).is_err());
    }

    #[test]
    fn optimal_policies_are_fixed_points() {
        let m = toy::mdp();
        let r = solve_qstar(&m, 1e-10, 10_000).unwrap();
        for pol in enumerate_optimal_policies(&r.phi_star, 100).unwrap() {
            let b = policy_kernel(&m, &pol);
            let lhs = m.reward_vector() + b * r.q_star.values() * m.gamma();
            assert!((lhs - r.q_star.values()).amax() <= 10.0 * 1e-10);
        }
    }
}
