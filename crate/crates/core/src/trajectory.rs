//! Deterministic Q-VI and stochastic tabular Q-learning runs with per-step
//! geometry diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    dist2_to_x1, distinf_to_x1, ones_component, rotate, PlaneBasis, TubeSpec, DEFAULT_TUBE_FRACTION,
};
use crate::mdp::{greedy_policy, policy_kernel, DetPolicy, QVector, ValidatedMdp};
use crate::par::{self, Execution};
use crate::solver::{
    bellman_apply, enumerate_optimal_policies, poss_contains, solve_qstar, OptimalityReport,
};
use crate::spectral::second_modulus;
use crate::switching::{error_step_verify, restricted_matrix};
use crate::toy;

/// Solver tolerance used when preparing a problem for trajectory work.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// An MDP together with its solution, tube and visualization plane.
#[derive(Debug, Clone)]
pub struct SolvedMdp {
    pub mdp: ValidatedMdp,
    pub report: OptimalityReport,
    /// `None` when no state is separated.
    pub tube: Option<TubeSpec>,
    pub basis: PlaneBasis,
    /// `|λ₂(PΠ^{π*})|` when the optimal policy is unique.
    pub lambda2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub tube_fraction: f64,
    pub basis: Option<PlaneBasis>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SOLVER_TOL,
            max_iter: DEFAULT_MAX_ITER,
            tube_fraction: DEFAULT_TUBE_FRACTION,
            basis: None,
        }
    }
}

impl SolvedMdp {
    pub fn new(mdp: ValidatedMdp, opts: SolveOptions) -> Result<Self> {
        let report = solve_qstar(&mdp, opts.tol, opts.max_iter)?;
        let tube = report
            .delta_bar
            .map(|db| TubeSpec::new(db, opts.tube_fraction))
            .transpose()?;
        let greedy_star = greedy_policy(&report.q_star, 0.0);
        let basis = match opts.basis {
            Some(b) => {
                if b.dim() != mdp.dim() {
                    return Err(Error::Dimension {
                        expected: mdp.dim(),
                        actual: b.dim(),
                    });
                }
                b
            }
            None if toy::is_toy(&mdp) => toy::plane_basis(),
            None if mdp.dim() >= 2 => {
                PlaneBasis::dominant_transverse(&restricted_matrix(&mdp, &greedy_star))?
            }
            None => {
                return Err(Error::InvalidArgument(
                    "a one-dimensional Q space has no transverse plane".into(),
                ))
            }
        };
        let lambda2 = if report.is_unique_optimal() {
            let pi_star = enumerate_optimal_policies(&report.phi_star, 1)?.remove(0);
            Some(second_modulus(&policy_kernel(&mdp, &pi_star))?)
        } else {
            None
        };
        Ok(Self {
            mdp,
            report,
            tube,
            basis,
            lambda2,
        })
    }

    pub fn q_star(&self) -> &QVector {
        &self.report.q_star
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    /// Rescales the tube radius, keeping everything else.
    pub fn with_tube_fraction(mut self, fraction: f64) -> Result<Self> {
        self.tube = self
            .report
            .delta_bar
            .map(|db| TubeSpec::new(db, fraction))
            .transpose()?;
        Ok(self)
    }

    fn record(&self, k: u64, q: &QVector, witness_residual: Option<f64>) -> TrajectoryRecord {
        let q_star = self.q_star();
        let distinf_x1 = distinf_to_x1(q, q_star);
        let (u, v) = self.basis.project(q, q_star);
        let (p, qq) = rotate(u, v);
        TrajectoryRecord {
            k,
            inf_err: q.max_abs_diff(q_star),
            dist2_x1: dist2_to_x1(q, q_star),
            distinf_x1,
            alpha: ones_component(q, q_star),
            poss_flag: poss_contains(&self.report, q),
            tube_flag: self.tube.is_some_and(|t| distinf_x1 <= t.delta),
            witness_residual,
            u,
            v,
            p,
            q: qq,
        }
    }
}

/// Diagnostics of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub k: u64,
    pub inf_err: f64,
    pub dist2_x1: f64,
    pub distinf_x1: f64,
    pub alpha: f64,
    pub poss_flag: bool,
    pub tube_flag: bool,
    /// Defect of the exact error recursion for the step into `k`; Q-VI only.
    pub witness_residual: Option<f64>,
    pub u: f64,
    pub v: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Tube,
    Poss,
}

/// Smallest recorded `k` with the flag set.
pub fn entrance_index(records: &[TrajectoryRecord], flag: Flag) -> Option<u64> {
    records
        .iter()
        .find(|r| match flag {
            Flag::Tube => r.tube_flag,
            Flag::Poss => r.poss_flag,
        })
        .map(|r| r.k)
}

/// Reference decay rates for normalized plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRates {
    pub gamma: f64,
    /// `γ |λ₂(PΠ^{π*})|`, present when the optimal policy is unique.
    pub gamma_lambda2: Option<f64>,
}

impl ReferenceRates {
    pub fn gamma_curve(&self, len: usize) -> Vec<f64> {
        (0..len).map(|k| self.gamma.powi(k as i32)).collect()
    }

    pub fn gamma_lambda2_curve(&self, len: usize) -> Option<Vec<f64>> {
        self.gamma_lambda2
            .map(|r| (0..len).map(|k| r.powi(k as i32)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct QviRun {
    pub records: Vec<TrajectoryRecord>,
    /// Greedy policy at every recorded iterate.
    pub policies: Vec<DetPolicy>,
    pub tube_entrance: Option<u64>,
    pub poss_entrance: Option<u64>,
    pub reference: ReferenceRates,
}

/// Runs `iters` Bellman steps from `q0`, recording `iters + 1` rows.
pub fn run_qvi(problem: &SolvedMdp, q0: &QVector, iters: usize) -> Result<QviRun> {
    if q0.len() != problem.mdp.dim() {
        return Err(Error::Dimension {
            expected: problem.mdp.dim(),
            actual: q0.len(),
        });
    }
    let mut records = Vec::with_capacity(iters + 1);
    let mut policies = Vec::with_capacity(iters + 1);
    let mut q = q0.clone();
    records.push(problem.record(0, &q, None));
    policies.push(greedy_policy(&q, 0.0));
    for k in 1..=iters {
        let next = bellman_apply(&problem.mdp, &q);
        let residual = error_step_verify(&problem.mdp, &q, &next, problem.q_star())?;
        q = next;
        records.push(problem.record(k as u64, &q, Some(residual)));
        policies.push(greedy_policy(&q, 0.0));
    }
    Ok(QviRun {
        tube_entrance: entrance_index(&records, Flag::Tube),
        poss_entrance: entrance_index(&records, Flag::Poss),
        reference: ReferenceRates {
            gamma: problem.gamma(),
            gamma_lambda2: problem.lambda2.map(|l| l * problem.gamma()),
        },
        records,
        policies,
    })
}

pub fn run_qvi_batch(
    problem: &SolvedMdp,
    initials: &[QVector],
    iters: usize,
    exec: Execution,
) -> Result<Vec<QviRun>> {
    par::map(exec, initials, |q0| run_qvi(problem, q0, iters))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// Drawn uniformly over states from the run's generator.
    Uniform,
    Fixed(usize),
}

/// Asynchronous tabular Q-learning settings.
///
/// Randomness comes from ChaCha8 seeded with `seed`; trajectory `j` of a
/// batch uses stream `j`, so results are reproducible across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearnConfig {
    pub seed: u64,
    pub steps: u64,
    pub alpha0: f64,
    pub decay: f64,
    pub record_stride: u64,
    pub initial_state: InitialState,
    /// Standard deviation of zero-mean Gaussian noise added to `R(s,a)`.
    pub reward_noise_std: f64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 100_000,
            alpha0: 0.35,
            decay: 0.01,
            record_stride: 100,
            initial_state: InitialState::Uniform,
            reward_noise_std: 0.0,
        }
    }
}

impl QLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha0) {
            return Err(Error::InvalidArgument(format!(
                "alpha0 {} outside [0, 1]",
                self.alpha0
            )));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "decay {} must be >= 0",
                self.decay
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be >= 1".into()));
        }
        if !(self.reward_noise_std >= 0.0) {
            return Err(Error::InvalidArgument("reward noise must be >= 0".into()));
        }
        Ok(())
    }

    /// `α_t = alpha0 / (1 + decay·t)`.
    pub fn step_size(&self, t: u64) -> f64 {
        self.alpha0 / (1.0 + self.decay * t as f64)
    }
}

fn sample_next(mdp: &ValidatedMdp, s: usize, a: usize, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for next in 0..mdp.num_states() {
        let p = mdp.prob(s, a, next);
        if p > 0.0 {
            acc += p;
            last = next;
            if u < acc {
                return next;
            }
        }
    }
    last
}

/// One Q-learning trajectory on generator stream `stream`.
pub fn run_qlearning(
    problem: &SolvedMdp,
    q0: &QVector,
    config: &QLearnConfig,
    stream: u64,
) -> Result<Vec<TrajectoryRecord>> {
    config.validate()?;
    let mdp = &problem.mdp;
    if q0.len() != mdp.dim() {
        return Err(Error::Dimension {
            expected: mdp.dim(),
            actual: q0.len(),
        });
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let noise = (config.reward_noise_std > 0.0)
        .then(|| Normal::new(0.0, config.reward_noise_std).expect("std checked"));

    let mut s = match config.initial_state {
        InitialState::Uniform => rng.random_range(0..ns),
        InitialState::Fixed(s) if s < ns => s,
        InitialState::Fixed(s) => {
            return Err(Error::InvalidArgument(format!(
                "initial state {} out of range",
                s + 1
            )))
        }
    };
    let mut q = q0.clone();
    let mut records = vec![problem.record(0, &q, None)];
    for t in 0..config.steps {
        let a = rng.random_range(0..na);
        let next = sample_next(mdp, s, a, rng.random::<f64>());
        let mut r = mdp.reward(s, a);
        if let Some(n) = &noise {
            r += n.sample(&mut rng);
        }
        let target = r + mdp.gamma() * q.state_max(next);
        let old = q.get(s, a);
        q.set(s, a, old + config.step_size(t) * (target - old));
        s = next;
        let done = t + 1;
        if done % config.record_stride == 0 || done == config.steps {
            records.push(problem.record(done, &q, None));
        }
    }
    Ok(records)
}

/// Trajectory `j` uses stream `j`.
pub fn run_qlearning_batch(
    problem: &SolvedMdp,
    initials: &[QVector],
    config: &QLearnConfig,
    exec: Execution,
) -> Result<Vec<Vec<TrajectoryRecord>>> {
    par::map_range(exec, initials.len(), |j| {
        run_qlearning(problem, &initials[j], config, j as u64)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem() -> SolvedMdp {
        SolvedMdp::new(toy::mdp(), SolveOptions::default()).unwrap()
    }

    #[test]
    fn toy_problem_setup() {
        let p = toy_problem();
        assert!(p.basis.canonical);
        let tube = p.tube.unwrap();
        assert!((tube.delta - 0.1609).abs() < 1e-3);
        assert!((p.lambda2.unwrap() - 0.5618).abs() < 1e-3);
    }

    #[test]
    fn qvi_from_reference_q0() {
        let p = toy_problem();
        let run = run_qvi(&p, &toy::reference_q0(), 50).unwrap();
        assert_eq!(run.records.len(), 51);
        assert_eq!(run.poss_entrance, Some(0));
        let entry = run.tube_entrance.expect("enters tube") as usize;
        assert!(entry > 0);
        assert!(run.records[entry..].iter().all(|r| r.tube_flag));
        assert!(run.records[1..]
            .iter()
            .all(|r| r.witness_residual.unwrap() <= 1e-9));
        assert!(run.records[0].witness_residual.is_none());
        for w in run.records.windows(2) {
            assert!(w[1].inf_err <= 0.95 * w[0].inf_err + 1e-10);
        }
    }

    #[test]
    fn qvi_from_q_star() {
        let p = toy_problem();
        let run = run_qvi(&p, p.q_star(), 5).unwrap();
        assert!(run.records.iter().all(|r| r.inf_err <= 1e-9 && r.tube_flag));
        assert_eq!(run.tube_entrance, Some(0));
        let zero = run_qvi(&p, p.q_star(), 0).unwrap();
        assert_eq!(zero.records.len(), 1);
    }

    #[test]
    fn reference_curves() {
        let r = ReferenceRates {
            gamma: 0.5,
            gamma_lambda2: Some(0.25),
        };
        assert_eq!(r.gamma_curve(3), vec![1.0, 0.5, 0.25]);
        assert_eq!(r.gamma_lambda2_curve(2).unwrap(), vec![1.0, 0.25]);
    }

    #[test]
    fn qlearning_is_reproducible() {
        let p = toy_problem();
        let cfg = QLearnConfig {
            seed: 7,
            steps: 2_000,
            record_stride: 50,
            ..Default::default()
        };
        let a = run_qlearning(&p, &toy::reference_q0(), &cfg, 3).unwrap();
        let b = run_qlearning(&p, &toy::reference_q0(), &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 41);
        let c = run_qlearning(&p, &toy::reference_q0(), &cfg, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_step_size_freezes_q() {
        let p = toy_problem();
        let cfg = QLearnConfig {
            alpha0: 0.0,
            steps: 500,
            record_stride: 100,
            ..Default::default()
        };
        let recs = run_qlearning(&p, &toy::reference_q0(), &cfg, 0).unwrap();
        assert!(recs
            .iter()
            .all(|r| r == &TrajectoryRecord { k: r.k, ..recs[0] }));
        let none = run_qlearning(
            &p,
            &toy::reference_q0(),
            &QLearnConfig { steps: 0, ..cfg },
            0,
        )
        .unwrap();
        assert_eq!(none.len(), 1);
    }

    #[test]
    fn reward_noise_and_bad_config() {
        let p = toy_problem();
        let cfg = QLearnConfig {
            steps: 200,
            reward_noise_std: 0.1,
            ..Default::default()
        };
        assert!(run_qlearning(&p, &toy::reference_q0(), &cfg, 0).is_ok());
        let bad = QLearnConfig { alpha0: 1.5, ..cfg };
        assert!(run_qlearning(&p, &toy::reference_q0(), &bad, 0).is_err());
        let bad = QLearnConfig {
            initial_state: InitialState::Fixed(3),
            ..cfg
        };
        assert!(run_qlearning(&p, &toy::reference_q0(), &bad, 0).is_err());
    }

    #[test]
    fn entrance_of_flags() {
        let p = toy_problem();
        let mut recs = run_qvi(&p, p.q_star(), 2).unwrap().records;
        assert_eq!(entrance_index(&recs, Flag::Poss), Some(0));
        recs.iter_mut().for_each(|r| r.poss_flag = false);
        assert_eq!(entrance_index(&recs, Flag::Poss), None);
    }

    #[test]
    fn batch_paths_agree() {
        let p = toy_problem();
        let init = p.basis.circle_initials(p.q_star(), 2.0, 4).unwrap();
        let cfg = QLearnConfig {
            steps: 1_000,
            ..Default::default()
        };
        let a = run_qlearning_batch(&p, &init, &cfg, Execution::Sequential).unwrap();
        let b = run_qlearning_batch(&p, &init, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let a = run_qvi_batch(&p, &init, 10, Execution::Sequential).unwrap();
        let b = run_qvi_batch(&p, &init, 10, Execution::Parallel).unwrap();
        assert_eq!(a[3].records, b[3].records);
    }
}
