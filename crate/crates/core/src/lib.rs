//! Geometry of Q-value iteration on finite discounted MDPs: the Bellman
//! solver, optimal-action structure, the projected switching system, joint
//! spectral radius certificates, tube and plane geometry, and trajectory
//! diagnostics for deterministic iteration and tabular Q-learning.
//!
//! Q-vectors are stored action-major: entry `(s, a)` sits at `a·|S| + s`
//! (0-based internally; user-facing ids are 1-based).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod jsr;
pub mod mdp;
pub mod par;
pub mod report;
pub mod solver;
pub mod spectral;
pub mod switching;
pub mod toy;
pub mod trajectory;

pub use error::{Error, Result};
pub use mdp::{DetPolicy, MdpSpec, QVector, StochPolicy, ValidatedMdp};
pub use par::Execution;
pub use solver::{solve_qstar, OptimalityReport};
pub use trajectory::{QLearnConfig, SolvedMdp, TrajectoryRecord};
