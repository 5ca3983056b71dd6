//! Finite MDP model, policies and the action-major vectorization.
//!
//! A Q-function over `|S|` states and `|A|` actions is stored as a single
//! vector of length `n = |S|·|A|`: all states for action 1, then all states
//! for action 2, and so on. With 0-based ids, `index(s, a) = a·|S| + s`.
//! The stacked transition matrix `P` is `n × |S|` with block `a` equal to
//! the kernel of action `a`, and a policy `μ` induces the `|S| × n` action
//! selection matrix `Π^μ` whose row `s` is `μ(·|s)ᵀ ⊗ e_sᵀ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerance on probability row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Raw MDP description, as read from or written to an MDP file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub name: String,
    pub gamma: f64,
    pub num_states: usize,
    pub num_actions: usize,
    /// `transitions[a][s][s'] = P(s' | s, a)`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a] = R(s, a)`.
    pub rewards: Vec<Vec<f64>>,
}

impl MdpSpec {
    /// Rescales every transition row to sum to one.
    ///
    /// Only called on explicit request; validation never renormalizes.
    pub fn renormalized(mut self) -> Result<Self> {
        for (a, kernel) in self.transitions.iter_mut().enumerate() {
            for (s, row) in kernel.iter_mut().enumerate() {
                let sum: f64 = row.iter().sum();
                if !(sum > 0.0) || row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidMdp(format!(
                        "cannot renormalize transitions[a={}][s={}] (row sum {sum})",
                        a + 1,
                        s + 1
                    )));
                }
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        Ok(self)
    }

    pub fn validate(self) -> Result<ValidatedMdp> {
        validate_mdp(self)
    }
}

/// An MDP whose shape and stochasticity have been checked.
#[derive(Debug, Clone)]
pub struct ValidatedMdp {
    spec: MdpSpec,
    stacked: Matrix,
    rewards: Vector,
}

/// Checks every [`MdpSpec`] invariant and reports the first violation.
///
/// Indices in messages are 1-based.
pub fn validate_mdp(spec: MdpSpec) -> Result<ValidatedMdp> {
    let (ns, na) = (spec.num_states, spec.num_actions);
    if ns == 0 || na == 0 {
        return Err(Error::InvalidMdp(format!(
            "num_states and num_actions must be >= 1 (got {ns}, {na})"
        )));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(Error::InvalidMdp(format!(
            "gamma {} outside (0, 1)",
            spec.gamma
        )));
    }
    if spec.transitions.len() != na {
        return Err(Error::InvalidMdp(format!(
            "shape mismatch: transitions has {} action blocks, expected {na}",
            spec.transitions.len()
        )));
    }
    for (a, kernel) in spec.transitions.iter().enumerate() {
        if kernel.len() != ns {
            return Err(Error::InvalidMdp(format!(
                "shape mismatch: transitions[a={}] has {} rows, expected {ns}",
                a + 1,
                kernel.len()
            )));
        }
        for (s, row) in kernel.iter().enumerate() {
            if row.len() != ns {
                return Err(Error::InvalidMdp(format!(
                    "shape mismatch: transitions[a={}][s={}] has {} entries, expected {ns}",
                    a + 1,
                    s + 1,
                    row.len()
                )));
            }
            if let Some((t, &p)) = row
                .iter()
                .enumerate()
                .find(|(_, &p)| !p.is_finite() || p < 0.0)
            {
                return Err(Error::InvalidMdp(format!(
                    "negative probability {p} at transitions[a={}][s={}][s'={}]",
                    a + 1,
                    s + 1,
                    t + 1
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMdp(format!(
                    "row sum {sum} ≠ 1 at transitions[a={}][s={}]",
                    a + 1,
                    s + 1
                )));
            }
        }
    }
    if spec.rewards.len() != ns {
        return Err(Error::InvalidMdp(format!(
            "shape mismatch: rewards has {} rows, expected {ns}",
            spec.rewards.len()
        )));
    }
    for (s, row) in spec.rewards.iter().enumerate() {
        if row.len() != na {
            return Err(Error::InvalidMdp(format!(
                "shape mismatch: rewards[s={}] has {} entries, expected {na}",
                s + 1,
                row.len()
            )));
        }
        if row.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!(
                "non-finite reward at rewards[s={}]",
                s + 1
            )));
        }
    }

    let n = ns * na;
    let stacked = Matrix::from_fn(n, ns, |i, t| spec.transitions[i / ns][i % ns][t]);
    let rewards = Vector::from_fn(n, |i, _| spec.rewards[i % ns][i / ns]);
    Ok(ValidatedMdp {
        spec,
        stacked,
        rewards,
    })
}

impl ValidatedMdp {
    pub fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn num_states(&self) -> usize {
        self.spec.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.spec.num_actions
    }

    /// `n = |S|·|A|`.
    pub fn dim(&self) -> usize {
        self.spec.num_states * self.spec.num_actions
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize) -> usize {
        a * self.spec.num_states + s
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.spec.transitions[a][s][next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.spec.rewards[s][a]
    }

    /// Rewards as an action-major vector.
    pub fn reward_vector(&self) -> &Vector {
        &self.rewards
    }

    /// The stacked `n × |S|` transition matrix.
    pub fn stacked(&self) -> &Matrix {
        &self.stacked
    }
}

/// Block-stacked transition matrix `P = [P_1; …; P_|A|]`.
pub fn stack_transitions(mdp: &ValidatedMdp) -> Matrix {
    mdp.stacked.clone()
}

/// A Q-function in action-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector {
    num_states: usize,
    values: Vector,
}

impl QVector {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            values: Vector::zeros(num_states * num_actions),
        }
    }

    pub fn from_vector(num_states: usize, values: Vector) -> Result<Self> {
        if num_states == 0 || !values.len().is_multiple_of(num_states) || values.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "length {} is not a positive multiple of |S| = {num_states}",
                values.len()
            )));
        }
        Ok(Self { num_states, values })
    }

    pub fn from_slice(num_states: usize, values: &[f64]) -> Result<Self> {
        Self::from_vector(num_states, Vector::from_column_slice(values))
    }

    /// Builds from a `[s][a]` table.
    pub fn from_table(table: &[Vec<f64>]) -> Result<Self> {
        let ns = table.len();
        let na = table.first().map_or(0, Vec::len);
        if ns == 0 || na == 0 || table.iter().any(|r| r.len() != na) {
            return Err(Error::InvalidArgument("ragged or empty Q table".into()));
        }
        Ok(Self {
            num_states: ns,
            values: Vector::from_fn(ns * na, |i, _| table[i % ns][i / ns]),
        })
    }

    /// Back to a `[s][a]` table.
    pub fn to_table(&self) -> Vec<Vec<f64>> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions()).map(|a| self.get(s, a)).collect())
            .collect()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.values.len() / self.num_states
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[a * self.num_states + s]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[a * self.num_states + s] = value;
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.as_slice().to_vec()
    }

    pub fn state_max(&self, s: usize) -> f64 {
        (0..self.num_actions())
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_a Q(s, a)` for every state.
    pub fn state_values(&self) -> Vector {
        Vector::from_fn(self.num_states, |s, _| self.state_max(s))
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            num_states: self.num_states,
            values: self.values.add_scalar(c),
        }
    }

    pub fn sub(&self, other: &QVector) -> Vector {
        &self.values - &other.values
    }

    pub fn max_abs_diff(&self, other: &QVector) -> f64 {
        self.sub(other).amax()
    }
}

/// Anything that assigns action probabilities per state.
pub trait Policy {
    fn num_states(&self) -> usize;
    fn prob(&self, s: usize, a: usize) -> f64;
}

/// A deterministic policy; actions are 0-based internally.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetPolicy {
    actions: Vec<usize>,
}

impl DetPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= num_actions) {
            return Err(Error::InvalidPolicy(format!(
                "action {} at state {} out of range 1..={num_actions}",
                a + 1,
                s + 1
            )));
        }
        Ok(Self { actions })
    }

    /// From 1-based action ids.
    pub fn from_one_based(actions: &[usize], num_actions: usize) -> Result<Self> {
        if actions.contains(&0) {
            return Err(Error::InvalidPolicy("action ids are 1-based".into()));
        }
        Self::new(actions.iter().map(|a| a - 1).collect(), num_actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.actions.iter().map(|a| a + 1).collect()
    }
}

impl Policy for DetPolicy {
    fn num_states(&self) -> usize {
        self.actions.len()
    }

    fn prob(&self, s: usize, a: usize) -> f64 {
        if self.actions[s] == a {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for DetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", a + 1)?;
        }
        write!(f, ")")
    }
}

/// A stationary stochastic policy, `dist[s][a] = μ(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochPolicy {
    dist: Vec<Vec<f64>>,
}

impl StochPolicy {
    pub fn new(dist: Vec<Vec<f64>>) -> Result<Self> {
        let na = dist.first().map_or(0, Vec::len);
        for (s, row) in dist.iter().enumerate() {
            if row.len() != na || na == 0 {
                return Err(Error::InvalidPolicy(format!(
                    "row {} has {} entries, expected {na}",
                    s + 1,
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row {} is not a probability vector (sum {sum})",
                    s + 1
                )));
            }
        }
        Ok(Self { dist })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            dist: vec![vec![1.0 / num_actions as f64; num_actions]; num_states],
        }
    }

    pub fn from_det(policy: &DetPolicy, num_actions: usize) -> Self {
        Self {
            dist: policy
                .actions
                .iter()
                .map(|&a| {
                    (0..num_actions)
                        .map(|b| if a == b { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn dist(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn num_actions(&self) -> usize {
        self.dist.first().map_or(0, Vec::len)
    }
}

impl Policy for StochPolicy {
    fn num_states(&self) -> usize {
        self.dist.len()
    }

    fn prob(&self, s: usize, a: usize) -> f64 {
        self.dist[s][a]
    }
}

/// The `|S| × n` action selection matrix `Π^μ`.
pub fn action_transition_matrix<P: Policy + ?Sized>(mdp: &ValidatedMdp, policy: &P) -> Matrix {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    debug_assert_eq!(policy.num_states(), ns);
    let mut pi = Matrix::zeros(ns, ns * na);
    for s in 0..ns {
        for a in 0..na {
            pi[(s, a * ns + s)] = policy.prob(s, a);
        }
    }
    pi
}

/// The `n × n` state-action kernel `B = P·Π^μ`; row-stochastic.
pub fn policy_kernel<P: Policy + ?Sized>(mdp: &ValidatedMdp, policy: &P) -> Matrix {
    mdp.stacked() * action_transition_matrix(mdp, policy)
}

/// The `|S| × |S|` state chain `P_μ = Π^μ·P`.
pub fn state_chain<P: Policy + ?Sized>(mdp: &ValidatedMdp, policy: &P) -> Matrix {
    action_transition_matrix(mdp, policy) * mdp.stacked()
}

/// Greedy policy with lowest-index tie-breaking.
///
/// At each state, picks the smallest action whose value is within `tie_tol`
/// of the state maximum. `tie_tol = 0` is an exact argmax.
pub fn greedy_policy(q: &QVector, tie_tol: f64) -> DetPolicy {
    let actions = (0..q.num_states())
        .map(|s| {
            let best = q.state_max(s);
            (0..q.num_actions())
                .find(|&a| q.get(s, a) >= best - tie_tol)
                .unwrap_or(0)
        })
        .collect();
    DetPolicy { actions }
}

/// `|A|^|S|`, or `None` on overflow.
pub fn policy_count(num_states: usize, num_actions: usize) -> Option<u128> {
    (num_actions as u128).checked_pow(u32::try_from(num_states).ok()?)
}

/// All deterministic policies in lexicographic order (state 1 most
/// significant).
pub fn enumerate_policies(mdp: &ValidatedMdp, cap: u128) -> Result<Vec<DetPolicy>> {
    let choices = vec![(0..mdp.num_actions()).collect::<Vec<_>>(); mdp.num_states()];
    cartesian_policies(&choices, cap)
}

/// Lexicographic Cartesian product of per-state action sets.
pub fn cartesian_policies(choices: &[Vec<usize>], cap: u128) -> Result<Vec<DetPolicy>> {
    let count = choices
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    if count == 0 {
        return Ok(out);
    }
    let mut cursor = vec![0usize; choices.len()];
    loop {
        out.push(DetPolicy {
            actions: cursor.iter().zip(choices).map(|(&i, c)| c[i]).collect(),
        });
        // odometer increment, last state fastest
        let mut pos = choices.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < choices[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
}
