//! Projection onto `span(𝟏)^⊥`, the restricted switching family, and the
//! exact stochastic-policy witness for the Q-VI error recursion.
//!
//! With `e_k = Q_k − Q*` the error obeys `e_{k+1} = γ P Π^{μ_k} e_k` for a
//! stochastic policy `μ_k` built from the current error. Projecting out the
//! all-ones direction gives `z_{k+1} = Ā_{μ_k} z_k` with
//! `Ā = Π_⊥ (γ P Π^μ) Π_⊥`.

use crate::error::{Error, Result};
use crate::mdp::{policy_kernel, DetPolicy, Matrix, Policy, QVector, StochPolicy, ValidatedMdp};
use crate::par::{self, Execution};
use crate::solver::bellman_apply;

/// `I − (1/n) 𝟏𝟏ᵀ`.
pub fn perp_projector(n: usize) -> Matrix {
    let inv = 1.0 / n as f64;
    Matrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// `Π_⊥ (γ P Π^policy) Π_⊥`.
pub fn restricted_matrix<P: Policy + ?Sized>(mdp: &ValidatedMdp, policy: &P) -> Matrix {
    let proj = perp_projector(mdp.dim());
    &proj * policy_kernel(mdp, policy) * mdp.gamma() * &proj
}

/// The restricted matrices of a set of deterministic policies.
#[derive(Debug, Clone)]
pub struct ProjectedFamily {
    pub n: usize,
    pub gamma: f64,
    pub projector: Matrix,
    pub policies: Vec<DetPolicy>,
    pub members: Vec<Matrix>,
}

impl ProjectedFamily {
    pub fn new(mdp: &ValidatedMdp, policies: Vec<DetPolicy>) -> Self {
        Self::new_with(mdp, policies, Execution::default())
    }

    pub fn new_with(mdp: &ValidatedMdp, policies: Vec<DetPolicy>, exec: Execution) -> Self {
        let members = par::map(exec, &policies, |p| restricted_matrix(mdp, p));
        Self {
            n: mdp.dim(),
            gamma: mdp.gamma(),
            projector: perp_projector(mdp.dim()),
            policies,
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// A stochastic policy reproducing one Bellman step of the error exactly.
#[derive(Debug, Clone)]
pub struct StochasticWitness {
    pub mu: StochPolicy,
    /// `max_s |μ(·|s)ᵀ e(s,·) − δ(s)|`.
    pub residual: f64,
}

const HULL_TOL: f64 = 1e-10;

/// Per state, mixes the argmax and argmin error entries so that
/// `μ(·|s)ᵀ e(s,·) = max_a Q(s,a) − max_a Q*(s,a)`.
pub fn stochastic_witness(q: &QVector, q_star: &QVector) -> Result<StochasticWitness> {
    if q.len() != q_star.len() {
        return Err(Error::Dimension {
            expected: q_star.len(),
            actual: q.len(),
        });
    }
    let (ns, na) = (q.num_states(), q.num_actions());
    let mut dist = vec![vec![0.0; na]; ns];
    let mut residual = 0.0f64;
    for (s, row) in dist.iter_mut().enumerate() {
        let err: Vec<f64> = (0..na).map(|a| q.get(s, a) - q_star.get(s, a)).collect();
        let delta = q.state_max(s) - q_star.state_max(s);
        let (mut hi_a, mut lo_a) = (0, 0);
        for a in 1..na {
            if err[a] > err[hi_a] {
                hi_a = a;
            }
            if err[a] < err[lo_a] {
                lo_a = a;
            }
        }
        let (hi, lo) = (err[hi_a], err[lo_a]);
        if delta < lo - HULL_TOL * (1.0 + lo.abs()) || delta > hi + HULL_TOL * (1.0 + hi.abs()) {
            return Err(Error::DeltaOutsideHull {
                state: s + 1,
                delta,
                lo,
                hi,
            });
        }
        if hi == lo {
            row[0] = 1.0;
        } else {
            let t = ((delta - lo) / (hi - lo)).clamp(0.0, 1.0);
            row[hi_a] += t;
            row[lo_a] += 1.0 - t;
        }
        let achieved: f64 = row.iter().zip(&err).map(|(p, e)| p * e).sum();
        residual = residual.max((achieved - delta).abs());
    }
    Ok(StochasticWitness {
        mu: StochPolicy::new(dist)?,
        residual,
    })
}

/// Checks `e_{k+1} = A_μ e_k` and `z_{k+1} = Ā_μ z_k` for one Bellman step
/// and returns the larger max-norm defect.
pub fn error_step_verify(
    mdp: &ValidatedMdp,
    q_k: &QVector,
    q_next: &QVector,
    q_star: &QVector,
) -> Result<f64> {
    let witness = stochastic_witness(q_k, q_star)?;
    let a_mu = policy_kernel(mdp, &witness.mu) * mdp.gamma();
    let e_k = q_k.sub(q_star);
    let e_next = q_next.sub(q_star);
    let full = (&e_next - &a_mu * &e_k).amax();

    let proj = perp_projector(mdp.dim());
    let a_bar = &proj * &a_mu * &proj;
    let z_k = &proj * &e_k;
    let z_next = &proj * &e_next;
    let projected = (&z_next - a_bar * z_k).amax();
    Ok(full.max(projected))
}

/// One Bellman step followed by [`error_step_verify`].
pub fn step_and_verify(
    mdp: &ValidatedMdp,
    q_k: &QVector,
    q_star: &QVector,
) -> Result<(QVector, f64)> {
    let next = bellman_apply(mdp, q_k);
    let r = error_step_verify(mdp, q_k, &next, q_star)?;
    Ok((next, r))
}
