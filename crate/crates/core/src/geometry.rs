//! Distances to `X₁ = Q* + span(𝟏)`, the invariant tube, entrance
//! horizons and two-dimensional plane coordinates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Matrix, QVector, Vector};
use crate::spectral::eigenvalues;

/// Euclidean distance from `q` to `X₁`: `‖Π_⊥(q − q*)‖₂`.
pub fn dist2_to_x1(q: &QVector, q_star: &QVector) -> f64 {
    let e = q.sub(q_star);
    let mean = e.mean();
    e.add_scalar(-mean).norm()
}

/// Max-norm distance from `q` to `X₁`: half the spread of `q − q*`.
pub fn distinf_to_x1(q: &QVector, q_star: &QVector) -> f64 {
    let e = q.sub(q_star);
    0.5 * (e.max() - e.min())
}

/// Mean all-ones component `(1/n) 𝟏ᵀ(q − q*)`.
pub fn ones_component(q: &QVector, q_star: &QVector) -> f64 {
    q.sub(q_star).mean()
}

/// Invariant tube `T_δ = {Q : dist_∞(Q, X₁) ≤ δ}` with `δ = fraction·Δ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub delta_bar: f64,
    pub fraction: f64,
    pub delta: f64,
}

pub const DEFAULT_TUBE_FRACTION: f64 = 0.4;

impl TubeSpec {
    pub fn new(delta_bar: f64, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "tube fraction {fraction} outside (0, 0.5)"
            )));
        }
        if !(delta_bar > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "optimality gap {delta_bar} must be positive"
            )));
        }
        Ok(Self {
            delta_bar,
            fraction,
            delta: fraction * delta_bar,
        })
    }

    pub fn contains(&self, q: &QVector, q_star: &QVector) -> bool {
        distinf_to_x1(q, q_star) <= self.delta
    }
}

/// Horizon after which γ-contraction alone forces the POSS.
pub fn k_basic(inf_err0: f64, delta_bar: f64, gamma: f64) -> u64 {
    entrance_horizon(inf_err0, delta_bar, gamma)
}

/// Horizon after which the restricted-JSR envelope forces the POSS.
pub fn k_id(dist2_0: f64, delta_bar: f64, c_eps: f64, beta_eps: f64) -> u64 {
    entrance_horizon(c_eps * dist2_0, delta_bar, beta_eps)
}

/// `0` if `scale < Δ̄/2`, else `⌊log(2·scale/Δ̄) / (−log rate)⌋ + 1`.
fn entrance_horizon(scale: f64, delta_bar: f64, rate: f64) -> u64 {
    assert!(delta_bar > 0.0, "optimality gap must be positive");
    assert!(rate > 0.0 && rate < 1.0, "rate must lie in (0, 1)");
    if scale < 0.5 * delta_bar {
        return 0;
    }
    ((2.0 * scale / delta_bar).ln() / -rate.ln()).floor() as u64 + 1
}

/// Orthonormal pair `(1̂, d̂)` spanning the visualization plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneBasis {
    pub one_hat: Vec<f64>,
    pub d_hat: Vec<f64>,
    /// False when `d̂` came from the dominant-mode heuristic.
    pub canonical: bool,
}

const BASIS_TOL: f64 = 1e-12;

impl PlaneBasis {
    pub fn new(d_hat: Vec<f64>) -> Result<Self> {
        let n = d_hat.len();
        if n < 2 {
            return Err(Error::InvalidArgument("plane needs dimension >= 2".into()));
        }
        let one_hat = vec![1.0 / (n as f64).sqrt(); n];
        let d = Vector::from_vec(d_hat.clone());
        if (d.norm() - 1.0).abs() > BASIS_TOL {
            return Err(Error::InvalidArgument(format!(
                "d_hat has norm {}",
                d.norm()
            )));
        }
        if d.dot(&Vector::from_vec(one_hat.clone())).abs() > BASIS_TOL {
            return Err(Error::InvalidArgument(
                "d_hat is not orthogonal to the all-ones direction".into(),
            ));
        }
        Ok(Self {
            one_hat,
            d_hat,
            canonical: true,
        })
    }

    /// `d̂` along the real part of the dominant eigenvector of `a_bar`,
    /// re-orthogonalized against `𝟏`.
    pub fn dominant_transverse(a_bar: &Matrix) -> Result<Self> {
        let n = a_bar.nrows();
        let mut dir = dominant_eigvec_real(a_bar)?;
        let mean = dir.mean();
        dir.add_scalar_mut(-mean);
        if dir.norm() < 1e-10 {
            // fall back to a fixed transverse direction
            dir = Vector::zeros(n);
            dir[0] = 1.0;
            dir[n - 1] = -1.0;
        }
        dir /= dir.norm();
        let mut basis = Self::new(dir.as_slice().to_vec())?;
        basis.canonical = false;
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.d_hat.len()
    }

    /// `(u, v) = (⟨q − q*, 1̂⟩, ⟨q − q*, d̂⟩)`.
    pub fn project(&self, q: &QVector, q_star: &QVector) -> (f64, f64) {
        let e = q.sub(q_star);
        let dot = |b: &[f64]| e.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        (dot(&self.one_hat), dot(&self.d_hat))
    }

    /// Half-width `c` of the tube slice `|v| ≤ c` in the plane.
    pub fn strip_half_width(&self, delta: f64) -> f64 {
        let d = Vector::from_vec(self.d_hat.clone());
        2.0 * delta / (d.max() - d.min())
    }

    /// `q* + radius (cos θ_j 1̂ + sin θ_j d̂)`, `θ_j = 2πj/count`.
    pub fn circle_initials(
        &self,
        q_star: &QVector,
        radius: f64,
        count: usize,
    ) -> Result<Vec<QVector>> {
        if !(radius > 0.0) || count == 0 {
            return Err(Error::InvalidArgument(
                "circle needs radius > 0 and count >= 1".into(),
            ));
        }
        if self.dim() != q_star.len() {
            return Err(Error::Dimension {
                expected: q_star.len(),
                actual: self.dim(),
            });
        }
        (0..count)
            .map(|j| {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                let (c, s) = (theta.cos(), theta.sin());
                let v = Vector::from_fn(self.dim(), |i, _| {
                    q_star.values()[i] + radius * (c * self.one_hat[i] + s * self.d_hat[i])
                });
                QVector::from_vector(q_star.num_states(), v)
            })
            .collect()
    }
}

pub fn plane_project(q: &QVector, q_star: &QVector, basis: &PlaneBasis) -> (f64, f64) {
    basis.project(q, q_star)
}

/// Rotated coordinates `p = (u − v)/√2`, `q = (u + v)/√2`.
pub fn rotate(u: f64, v: f64) -> (f64, f64) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ((u - v) * h, (u + v) * h)
}

/// Inverse iteration at the largest-modulus eigenvalue.
fn dominant_eigvec_real(a: &Matrix) -> Result<Vector> {
    let n = a.nrows();
    let eig = eigenvalues(a)?;
    let lambda = eig
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap_or(Complex64::new(0.0, 0.0));
    let scale = a.amax().max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let shifted = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        Complex64::new(a[(i, j)], 0.0)
            - if i == j {
                shift
            } else {
                Complex64::new(0.0, 0.0)
            }
    });
    let lu = shifted.lu();
    let mut x = nalgebra::DVector::<Complex64>::from_fn(n, |i, _| {
        Complex64::new(1.0 + i as f64 / n as f64, 0.0)
    });
    for _ in 0..6 {
        match lu.solve(&x) {
            Some(y) => {
                let norm = y.norm();
                if !(norm > 0.0) || !norm.is_finite() {
                    break;
                }
                x = y / Complex64::new(norm, 0.0);
            }
            None => break,
        }
    }
    // rotate so the largest entry is real, then take real parts
    let (imax, _) = x
        .iter()
        .enumerate()
        .max_by(|(_, p), (_, q)| p.norm().total_cmp(&q.norm()))
        .unwrap_or((0, &Complex64::new(1.0, 0.0)));
    let phase = if x[imax].norm() > 0.0 {
        x[imax].conj() / x[imax].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    Ok(Vector::from_fn(n, |i, _| (x[i] * phase).re))
}
