//! The analysis report: optimality data, tube, certificates and horizons
//! in one serializable document. Policy and state ids are 1-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist2_to_x1, k_basic, k_id, TubeSpec};
use crate::jsr::{
    certify, envelope_constants, family_policies, overlap_bounds, BoundKind, CertifyOptions,
    FamilyLabel, JsrCertificate, LyapunovConstants, MethodBound, NormBound, ObstructionKind,
    OverlapBounds, Strictness, DEFAULT_BETA_FACTOR,
};
use crate::mdp::{policy_count, QVector};
use crate::par::Execution;
use crate::solver::enumerate_optimal_policies;
use crate::spectral::spectral_radius;
use crate::switching::restricted_matrix;
use crate::trajectory::SolvedMdp;

pub const REPORT_SCHEMA: &str = "qvi-geometry/analyze-report/v1";

/// Settings that shaped a report, echoed into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub mdp_path: Option<String>,
    pub delta_frac: f64,
    pub depth: usize,
    pub cap: u128,
    pub solver_tol: f64,
    pub sample_seed: u64,
    pub beta_factor: f64,
    /// How the horizon initial point was chosen.
    pub q0_source: String,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            mdp_path: None,
            delta_frac: crate::geometry::DEFAULT_TUBE_FRACTION,
            depth: crate::jsr::DEFAULT_DEPTH,
            cap: crate::jsr::DEFAULT_SEQUENCE_CAP,
            solver_tol: crate::trajectory::DEFAULT_SOLVER_TOL,
            sample_seed: 0,
            beta_factor: DEFAULT_BETA_FACTOR,
            q0_source: "zeros".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSummary {
    pub name: String,
    pub gamma: f64,
    pub num_states: usize,
    pub num_actions: usize,
    /// `|A|^|S|`, absent on overflow.
    pub num_policies: Option<u128>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityDoc {
    /// `[s][a]`.
    pub q_star: Vec<Vec<f64>>,
    pub v_star: Vec<f64>,
    pub phi_star: Vec<Vec<usize>>,
    pub s_sep: Vec<usize>,
    pub delta_bar_per_state: Vec<(usize, f64)>,
    pub delta_bar: Option<f64>,
    pub tol: f64,
    pub tol_opt: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Absent when there are more optimal policies than the cap.
    pub optimal_policies: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDoc {
    /// `|λ₂(PΠ^{π*})|` for a unique optimal policy.
    pub lambda2: Option<f64>,
    pub gamma_lambda2: Option<f64>,
    /// `ρ(Ā_{π*})`.
    pub rho_restricted_optimal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionDoc {
    pub policy: Vec<usize>,
    #[serde(flatten)]
    pub kind: ObstructionKind,
    pub closed_classes: Vec<Vec<usize>>,
    pub periods: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub family: FamilyLabel,
    pub num_policies: usize,
    pub depth: usize,
    pub depth_used: usize,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub gamma: f64,
    pub strict: Strictness,
    pub method_trace: Vec<MethodBound>,
    pub norm_bound: NormBound,
    pub obstruction: Option<ObstructionDoc>,
    pub notes: Vec<String>,
}

impl From<&JsrCertificate> for CertificateDoc {
    fn from(c: &JsrCertificate) -> Self {
        Self {
            family: c.family_label,
            num_policies: c.num_policies,
            depth: c.depth,
            depth_used: c.depth_used,
            upper_bound: c.upper_bound,
            lower_bound: c.lower_bound,
            gamma: c.gamma,
            strict: c.strict,
            method_trace: c.method_trace.clone(),
            norm_bound: c.norm_bound,
            obstruction: c.obstruction.as_ref().map(|o| ObstructionDoc {
                policy: o.policy.one_based(),
                kind: o.kind.clone(),
                closed_classes: one_based_sets(&o.structure.closed_classes),
                periods: o.structure.periods.clone(),
            }),
            notes: c.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDoc {
    pub q0: Vec<Vec<f64>>,
    pub inf_err0: f64,
    pub dist2_x1_0: f64,
    /// First `k` guaranteed to lie in POSS by the sup-norm contraction.
    pub k_basic: Option<u64>,
    /// Same guarantee via the restricted-JSR envelope.
    pub k_id: Option<u64>,
    pub lyapunov: Option<LyapunovConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub schema: String,
    pub version: String,
    pub config: AnalyzeConfig,
    pub mdp: MdpSummary,
    pub optimality: OptimalityDoc,
    pub tube: Option<TubeSpec>,
    pub spectral: SpectralDoc,
    pub certificates: Certificates,
    pub overlap: OverlapBounds,
    /// First obstructing policy over the full family.
    pub obstruction: Option<ObstructionDoc>,
    pub horizons: HorizonDoc,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub full: Option<CertificateDoc>,
    pub optimal: Option<CertificateDoc>,
}

fn one_based_sets(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    sets.iter()
        .map(|s| s.iter().map(|x| x + 1).collect())
        .collect()
}

/// Builds the full report. A policy family too large to enumerate becomes
/// a warning; numeric failures are errors.
pub fn analyze(
    problem: &SolvedMdp,
    q0: &QVector,
    config: &AnalyzeConfig,
    exec: Execution,
) -> Result<AnalyzeReport> {
    let mdp = &problem.mdp;
    let rep = &problem.report;
    if q0.len() != mdp.dim() {
        return Err(Error::Dimension {
            expected: mdp.dim(),
            actual: q0.len(),
        });
    }
    let mut warnings = rep.warnings.clone();
    let opts = CertifyOptions {
        depth: config.depth,
        cap: config.cap,
        sample_seed: config.sample_seed,
        exec,
    };

    let mut certificate = |label: FamilyLabel| -> Result<Option<JsrCertificate>> {
        match certify(mdp, rep, label, &opts) {
            Ok(c) => {
                warnings.extend(c.notes.iter().map(|n| format!("{label} family: {n}")));
                Ok(Some(c))
            }
            Err(Error::CapExceeded { count, cap }) => {
                warnings.push(format!(
                    "{label} family: {count} policies exceed cap {cap}; certificate skipped"
                ));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let full = certificate(FamilyLabel::Full)?;
    let optimal = certificate(FamilyLabel::Optimal)?;

    let optimal_policies = enumerate_optimal_policies(&rep.phi_star, config.cap).ok();
    let rho_restricted_optimal = match optimal_policies.as_deref() {
        Some([only]) => Some(spectral_radius(&restricted_matrix(mdp, only))?),
        _ => None,
    };

    let inf_err0 = q0.max_abs_diff(&rep.q_star);
    let dist2_x1_0 = dist2_to_x1(q0, &rep.q_star);
    let lyapunov = match family_policies(mdp, rep, FamilyLabel::Full, config.cap) {
        Ok(policies) => {
            let family = crate::switching::ProjectedFamily::new_with(mdp, policies, exec);
            match envelope_constants(
                &family.members,
                config.depth,
                config.cap,
                config.beta_factor,
            ) {
                Ok(c) => Some(c),
                Err(
                    e @ (Error::InvalidArgument(_)
                    | Error::EtaNotCertified { .. }
                    | Error::CapExceeded { .. }),
                ) => {
                    warnings.push(format!("envelope constants unavailable: {e}"));
                    None
                }
                Err(e) => return Err(e),
            }
        }
        Err(_) => None,
    };
    let k_basic_v = rep.delta_bar.map(|db| k_basic(inf_err0, db, mdp.gamma()));
    let k_id_v = match (rep.delta_bar, lyapunov) {
        (Some(db), Some(l)) => Some(k_id(dist2_x1_0, db, l.c_eps, l.beta_eps)),
        _ => None,
    };

    let obstruction = full
        .as_ref()
        .and_then(|c| CertificateDoc::from(c).obstruction);
    Ok(AnalyzeReport {
        schema: REPORT_SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        mdp: MdpSummary {
            name: mdp.name().into(),
            gamma: mdp.gamma(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            num_policies: policy_count(mdp.num_states(), mdp.num_actions()),
        },
        optimality: OptimalityDoc {
            q_star: rep.q_star.to_table(),
            v_star: rep.v_star.iter().copied().collect(),
            phi_star: one_based_sets(&rep.phi_star),
            s_sep: rep.s_sep.iter().map(|s| s + 1).collect(),
            delta_bar_per_state: rep
                .delta_bar_per_state
                .iter()
                .map(|&(s, d)| (s + 1, d))
                .collect(),
            delta_bar: rep.delta_bar,
            tol: rep.tol,
            tol_opt: rep.tol_opt,
            iterations: rep.iterations,
            residual: rep.residual,
            optimal_policies: optimal_policies
                .as_ref()
                .map(|ps| ps.iter().map(|p| p.one_based()).collect()),
        },
        tube: problem.tube,
        spectral: SpectralDoc {
            lambda2: problem.lambda2,
            gamma_lambda2: problem.lambda2.map(|l| l * mdp.gamma()),
            rho_restricted_optimal,
        },
        certificates: Certificates {
            full: full.as_ref().map(CertificateDoc::from),
            optimal: optimal.as_ref().map(CertificateDoc::from),
        },
        overlap: overlap_bounds(mdp),
        obstruction,
        horizons: HorizonDoc {
            q0: q0.to_table(),
            inf_err0,
            dist2_x1_0,
            k_basic: k_basic_v,
            k_id: k_id_v,
            lyapunov,
        },
        warnings,
    })
}

impl CertificateDoc {
    pub fn upper_methods(&self) -> impl Iterator<Item = &MethodBound> {
        self.method_trace
            .iter()
            .filter(|m| m.kind == BoundKind::Upper)
    }
}
