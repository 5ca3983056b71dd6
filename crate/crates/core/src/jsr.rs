//! Certified bounds on the joint spectral radius of the restricted
//! switching family.
//!
//! The exact JSR is not computed. Upper bounds come from exhaustive
//! product norms, uniform scrambling of state-action kernels, one-step
//! overlap conditions and the `γ` baseline; lower bounds from spectral
//! radii of products and from Markov-chain obstructions. Every exhaustive
//! product enumeration is capped by the number of sequences per level.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{enumerate_policies, policy_kernel, DetPolicy, Matrix, ValidatedMdp};
use crate::par::{self, Execution};
use crate::solver::{enumerate_optimal_policies, OptimalityReport};
use crate::spectral::{
    chain_structure, is_scrambling, min_row_overlap, second_modulus, spectral_radius,
    ChainStructure,
};
use crate::switching::ProjectedFamily;

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_SEQUENCE_CAP: u128 = 4096;
/// Slack used for strictness verdicts.
pub const VERDICT_SLACK: f64 = 1e-9;
/// Threshold for calling an eigenvalue modulus a unit-modulus mode.
pub const UNIT_MODULUS_TOL: f64 = 1e-8;
pub const DEFAULT_BETA_FACTOR: f64 = 1.05;

/// Largest Euclidean operator norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Max absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn level_count(members: usize, depth: usize) -> u128 {
    (members as u128)
        .checked_pow(depth as u32)
        .unwrap_or(u128::MAX)
}

/// Largest depth `ℓ ≤ depth` whose `members^ℓ` sequences fit in `cap`.
pub fn feasible_depth(members: usize, depth: usize, cap: u128) -> usize {
    (1..=depth)
        .take_while(|&l| level_count(members, l) <= cap)
        .last()
        .unwrap_or(0)
}

/// Visits every length-ℓ product `M_{σℓ}···M_{σ1}`, level by level, up to
/// the deepest level allowed by `cap`. Returns the last level visited.
fn for_each_level<F>(
    family: &[Matrix],
    depth: usize,
    cap: u128,
    exec: Execution,
    mut visit: F,
) -> Result<usize>
where
    F: FnMut(usize, &[Matrix]) -> Result<()>,
{
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty matrix family".into()));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let reach = feasible_depth(family.len(), depth, cap);
    if reach == 0 {
        return Err(Error::CapExceeded {
            count: family.len() as u128,
            cap,
        });
    }
    let m = family.len();
    let mut level: Vec<Matrix> = family.to_vec();
    visit(1, &level)?;
    for l in 2..=reach {
        let prev = &level;
        level = par::map_range(exec, prev.len() * m, |idx| {
            &family[idx % m] * &prev[idx / m]
        });
        visit(l, &level)?;
    }
    Ok(reach)
}

/// Statistics of all products of one length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductLevel {
    pub depth: usize,
    pub count: u128,
    pub max_norm2: f64,
    pub max_norm_inf: f64,
    pub max_spectral_radius: f64,
}

/// Exhaustive product statistics for depths `1..=depth_reached`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductStats {
    pub requested_depth: usize,
    pub levels: Vec<ProductLevel>,
}

impl ProductStats {
    pub fn depth_reached(&self) -> usize {
        self.levels.len()
    }

    pub fn truncated(&self) -> bool {
        self.levels.len() < self.requested_depth
    }

    /// Max product 2-norm at length `k`, with the empty product at `k = 0`.
    pub fn max_norm2_at(&self, k: usize) -> Option<f64> {
        if k == 0 {
            Some(1.0)
        } else {
            self.levels.get(k - 1).map(|l| l.max_norm2)
        }
    }
}

pub fn product_stats(
    family: &[Matrix],
    depth: usize,
    cap: u128,
    exec: Execution,
) -> Result<ProductStats> {
    let mut levels = Vec::new();
    for_each_level(family, depth, cap, exec, |l, products| {
        let per: Vec<Result<(f64, f64, f64)>> = par::map(exec, products, |p| {
            Ok((norm2(p), norm_inf(p), spectral_radius(p)?))
        });
        let mut lvl = ProductLevel {
            depth: l,
            count: products.len() as u128,
            max_norm2: 0.0,
            max_norm_inf: 0.0,
            max_spectral_radius: 0.0,
        };
        for r in per {
            let (n2, ni, rho) = r?;
            lvl.max_norm2 = lvl.max_norm2.max(n2);
            lvl.max_norm_inf = lvl.max_norm_inf.max(ni);
            lvl.max_spectral_radius = lvl.max_spectral_radius.max(rho);
        }
        levels.push(lvl);
        Ok(())
    })?;
    Ok(ProductStats {
        requested_depth: depth,
        levels,
    })
}

/// An upper bound `min_ℓ (max ‖product_ℓ‖)^{1/ℓ}` with the depth attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBound {
    pub value: f64,
    pub best_depth: usize,
    pub depth_used: usize,
    pub truncated: bool,
}

fn norm_bound_from(stats: &ProductStats, pick: impl Fn(&ProductLevel) -> f64) -> NormBound {
    let (best_depth, value) = stats
        .levels
        .iter()
        .map(|l| (l.depth, pick(l).powf(1.0 / l.depth as f64)))
        .fold(
            (1, f64::INFINITY),
            |acc, x| if x.1 < acc.1 { x } else { acc },
        );
    NormBound {
        value,
        best_depth,
        depth_used: stats.depth_reached(),
        truncated: stats.truncated(),
    }
}

/// Product 2-norm bound on the JSR, exhaustive up to the feasible depth.
pub fn product_norm_bound(family: &[Matrix], depth: usize, cap: u128) -> Result<NormBound> {
    let stats = product_stats(family, depth, cap, Execution::default())?;
    Ok(norm_bound_from(&stats, |l| l.max_norm2))
}

/// A lower bound `max_ℓ max ρ(product_ℓ)^{1/ℓ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLowerBound {
    pub value: f64,
    pub best_depth: usize,
    /// Depth covered exhaustively.
    pub exhaustive_depth: usize,
    /// Number of randomly sampled sequences beyond the exhaustive depth.
    pub sampled: usize,
}

fn lower_bound_from(stats: &ProductStats) -> SpectralLowerBound {
    let (best_depth, value) = stats
        .levels
        .iter()
        .map(|l| (l.depth, l.max_spectral_radius.powf(1.0 / l.depth as f64)))
        .fold((1, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    SpectralLowerBound {
        value,
        best_depth,
        exhaustive_depth: stats.depth_reached(),
        sampled: 0,
    }
}

/// Tightens a lower bound with `samples` random sequences at each depth the
/// exhaustive pass could not reach.
fn sample_lower_bound(
    family: &[Matrix],
    mut bound: SpectralLowerBound,
    depth: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SpectralLowerBound> {
    for l in bound.exhaustive_depth + 1..=depth {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        let seqs: Vec<Vec<usize>> = (0..samples)
            .map(|_| (0..l).map(|_| rng.random_range(0..family.len())).collect())
            .collect();
        let radii: Vec<Result<f64>> = par::map(exec, &seqs, |seq| {
            let prod = seq
                .iter()
                .skip(1)
                .fold(family[seq[0]].clone(), |acc, &i| &family[i] * acc);
            spectral_radius(&prod)
        });
        for r in radii {
            let v = r?.powf(1.0 / l as f64);
            if v > bound.value {
                bound.value = v;
                bound.best_depth = l;
            }
        }
        bound.sampled += samples;
    }
    Ok(bound)
}

/// Spectral lower bound on the JSR; sequences beyond `cap` are sampled.
pub fn spectral_lower_bound(
    family: &[Matrix],
    depth: usize,
    cap: u128,
    seed: u64,
) -> Result<SpectralLowerBound> {
    let exec = Execution::default();
    let stats = product_stats(family, depth, cap, exec)?;
    let bound = lower_bound_from(&stats);
    sample_lower_bound(family, bound, depth, cap.min(1 << 16) as usize, seed, exec)
}

/// Uniform scrambling of all length-L kernel products `B_ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScramblingCertificate {
    pub depth: usize,
    pub all_scrambling: bool,
    /// `min_ω min_{x,y} Σ_υ min((B_ω)_xυ, (B_ω)_yυ)`.
    pub eta: f64,
    /// `γ (1 − η_L)^{1/L}` when all products scramble, else `γ`.
    pub bound: f64,
}

pub fn scrambling_certificate(
    mdp: &ValidatedMdp,
    policies: &[DetPolicy],
    depth: usize,
    cap: u128,
    exec: Execution,
) -> Result<ScramblingCertificate> {
    if level_count(policies.len(), depth) > cap {
        return Err(Error::CapExceeded {
            count: level_count(policies.len(), depth),
            cap,
        });
    }
    let kernels = par::map(exec, policies, |p| policy_kernel(mdp, p));
    let mut cert = ScramblingCertificate {
        depth,
        all_scrambling: true,
        eta: f64::INFINITY,
        bound: mdp.gamma(),
    };
    for_each_level(&kernels, depth, cap, exec, |l, products| {
        if l == depth {
            let per = par::map(exec, products, |b| (is_scrambling(b), min_row_overlap(b)));
            for (scr, overlap) in per {
                cert.all_scrambling &= scr;
                cert.eta = cert.eta.min(overlap);
            }
        }
        Ok(())
    })?;
    if cert.all_scrambling && cert.eta > 0.0 {
        cert.bound = mdp.gamma() * (1.0 - cert.eta).powf(1.0 / depth as f64);
    }
    Ok(cert)
}

/// One-step overlap constants of the transition kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapBounds {
    /// `max_{s'} min_{(s,a)} P(s'|s,a)`.
    pub p_min: f64,
    /// `Σ_{s'} min_{(s,a)} P(s'|s,a)`.
    pub eps_doeblin: f64,
}

pub fn overlap_bounds(mdp: &ValidatedMdp) -> OverlapBounds {
    let p = mdp.stacked();
    let col_min: Vec<f64> = p
        .column_iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    OverlapBounds {
        p_min: col_min.iter().copied().fold(0.0, f64::max),
        eps_doeblin: col_min.iter().sum(),
    }
}

/// Why a policy blocks `ρ̄ < γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObstructionKind {
    MultipleClosedClasses { count: usize },
    Periodic { period: usize },
    UnitModulus { modulus: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstruction {
    pub policy: DetPolicy,
    pub kind: ObstructionKind,
    pub structure: ChainStructure,
}

/// First policy (in the given order) whose chain has a nontrivial
/// unit-modulus mode.
pub fn obstruction_certificate(
    mdp: &ValidatedMdp,
    policies: &[DetPolicy],
    exec: Execution,
) -> Result<Option<Obstruction>> {
    let found = par::find_map_first(exec, policies, |pol| {
        let structure = chain_structure(mdp, pol);
        let kind = if structure.closed_classes.len() > 1 {
            Some(ObstructionKind::MultipleClosedClasses {
                count: structure.closed_classes.len(),
            })
        } else if let Some(&period) = structure.periods.iter().find(|&&p| p > 1) {
            Some(ObstructionKind::Periodic { period })
        } else {
            match second_modulus(&policy_kernel(mdp, pol)) {
                Ok(m) if m >= 1.0 - UNIT_MODULUS_TOL => {
                    Some(ObstructionKind::UnitModulus { modulus: m })
                }
                Ok(_) => None,
                Err(e) => return Some(Err(e)),
            }
        };
        kind.map(|kind| {
            Ok(Obstruction {
                policy: pol.clone(),
                kind,
                structure,
            })
        })
    });
    found.transpose()
}

/// Constants of the exponential envelope
/// `‖z_k‖₂ ≤ c_eps · beta_eps^k · ‖z_0‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConstants {
    pub eta: f64,
    pub beta_eps: f64,
    pub depth: usize,
    pub c0: f64,
    /// `C0² / (1 − (eta/beta_eps)²)`.
    pub c_eps_sq: f64,
    /// `sqrt(c_eps_sq)`.
    pub c_eps: f64,
}

/// Builds the envelope constants from a depth-`L` norm certificate.
///
/// Requires `0 < eta < beta_eps < 1` and `max ‖product_L‖₂ ≤ eta^L`; then
/// every product of any length `k = mL + r` is bounded by `C0 · eta^k`.
pub fn lyapunov_constants(
    family: &[Matrix],
    eta: f64,
    beta_eps: f64,
    depth: usize,
    cap: u128,
) -> Result<LyapunovConstants> {
    if !(eta > 0.0 && eta < beta_eps && beta_eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < eta < beta_eps < 1 (eta {eta}, beta_eps {beta_eps})"
        )));
    }
    let stats = product_stats(family, depth, cap, Execution::default())?;
    if stats.truncated() {
        return Err(Error::CapExceeded {
            count: level_count(family.len(), depth),
            cap,
        });
    }
    let top = stats.max_norm2_at(depth).expect("depth reached");
    let bound = eta.powi(depth as i32);
    if top > bound * (1.0 + 1e-12) {
        return Err(Error::EtaNotCertified {
            depth,
            max_norm: top,
            bound,
        });
    }
    let c0 = (0..depth)
        .map(|k| stats.max_norm2_at(k).expect("k < depth") / eta.powi(k as i32))
        .fold(1.0, f64::max);
    let c_eps_sq = c0 * c0 / (1.0 - (eta / beta_eps).powi(2));
    Ok(LyapunovConstants {
        eta,
        beta_eps,
        depth,
        c0,
        c_eps_sq,
        c_eps: c_eps_sq.sqrt(),
    })
}

/// Envelope constants with `eta` taken from the product 2-norm bound and
/// `beta_eps = factor · eta`.
pub fn envelope_constants(
    family: &[Matrix],
    depth: usize,
    cap: u128,
    factor: f64,
) -> Result<LyapunovConstants> {
    let nb = product_norm_bound(family, depth, cap)?;
    if !(nb.value > 0.0) {
        return Err(Error::InvalidArgument(
            "zero product-norm bound; family is nilpotent".into(),
        ));
    }
    lyapunov_constants(family, nb.value, factor * nb.value, nb.best_depth, cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyLabel {
    Full,
    Optimal,
}

impl fmt::Display for FamilyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyLabel::Full => "full",
            FamilyLabel::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strictness {
    ProvenStrict,
    ProvenNotStrict,
    Undetermined,
}

impl fmt::Display for Strictness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strictness::ProvenStrict => "proven-strict",
            Strictness::ProvenNotStrict => "proven-not-strict",
            Strictness::Undetermined => "undetermined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBound {
    pub method: String,
    pub kind: BoundKind,
    pub depth: usize,
    pub value: f64,
}

impl MethodBound {
    fn new(method: &str, kind: BoundKind, depth: usize, value: f64) -> Self {
        Self {
            method: method.to_string(),
            kind,
            depth,
            value,
        }
    }
}

/// Certified interval for the restricted JSR of one policy family.
#[derive(Debug, Clone)]
pub struct JsrCertificate {
    pub family_label: FamilyLabel,
    pub num_policies: usize,
    pub depth: usize,
    pub depth_used: usize,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub gamma: f64,
    pub method_trace: Vec<MethodBound>,
    pub strict: Strictness,
    pub obstruction: Option<Obstruction>,
    /// Product 2-norm bound, kept for envelope constants.
    pub norm_bound: NormBound,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub depth: usize,
    pub cap: u128,
    pub sample_seed: u64,
    pub exec: Execution,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            depth: DEFAULT_DEPTH,
            cap: DEFAULT_SEQUENCE_CAP,
            sample_seed: 0,
            exec: Execution::default(),
        }
    }
}

/// The policies making up a family.
pub fn family_policies(
    mdp: &ValidatedMdp,
    report: &OptimalityReport,
    label: FamilyLabel,
    cap: u128,
) -> Result<Vec<DetPolicy>> {
    match label {
        FamilyLabel::Full => enumerate_policies(mdp, cap),
        FamilyLabel::Optimal => enumerate_optimal_policies(&report.phi_star, cap),
    }
}

/// Runs every method on one family and aggregates the verdict.
pub fn certify(
    mdp: &ValidatedMdp,
    report: &OptimalityReport,
    label: FamilyLabel,
    opts: &CertifyOptions,
) -> Result<JsrCertificate> {
    let policies = family_policies(mdp, report, label, opts.cap)?;
    certify_policies(mdp, policies, label, opts)
}

pub fn certify_policies(
    mdp: &ValidatedMdp,
    policies: Vec<DetPolicy>,
    label: FamilyLabel,
    opts: &CertifyOptions,
) -> Result<JsrCertificate> {
    let gamma = mdp.gamma();
    let mut notes = Vec::new();
    let family = ProjectedFamily::new_with(mdp, policies, opts.exec);
    let mut trace = vec![MethodBound::new(
        "gamma-baseline",
        BoundKind::Upper,
        0,
        gamma,
    )];

    let stats = product_stats(&family.members, opts.depth, opts.cap, opts.exec)?;
    if stats.truncated() {
        notes.push(format!(
            "{} policies: {} sequences at depth {} exceed cap {}; exhaustive bounds use depth {}",
            family.len(),
            level_count(family.len(), opts.depth),
            opts.depth,
            opts.cap,
            stats.depth_reached()
        ));
    }
    let norm_bound = norm_bound_from(&stats, |l| l.max_norm2);
    let inf_bound = norm_bound_from(&stats, |l| l.max_norm_inf);
    trace.push(MethodBound::new(
        "product-norm-2",
        BoundKind::Upper,
        norm_bound.best_depth,
        norm_bound.value,
    ));
    trace.push(MethodBound::new(
        "product-norm-inf",
        BoundKind::Upper,
        inf_bound.best_depth,
        inf_bound.value,
    ));
    if family.len() == 1 {
        let rho = stats.levels[0].max_spectral_radius;
        trace.push(MethodBound::new(
            "single-member-spectral",
            BoundKind::Upper,
            1,
            rho,
        ));
    }

    let scr_depth = stats.depth_reached();
    let scr = scrambling_certificate(mdp, &family.policies, scr_depth, opts.cap, opts.exec)?;
    trace.push(MethodBound::new(
        "scrambling-eta",
        BoundKind::Info,
        scr_depth,
        scr.eta,
    ));
    if scr.all_scrambling {
        trace.push(MethodBound::new(
            "scrambling",
            BoundKind::Upper,
            scr_depth,
            scr.bound,
        ));
    }

    let overlap = overlap_bounds(mdp);
    if overlap.p_min > 0.0 {
        trace.push(MethodBound::new(
            "common-descendant",
            BoundKind::Upper,
            1,
            gamma * (1.0 - overlap.p_min),
        ));
    }
    if overlap.eps_doeblin > 0.0 {
        trace.push(MethodBound::new(
            "doeblin",
            BoundKind::Upper,
            1,
            gamma * (1.0 - overlap.eps_doeblin),
        ));
    }

    let mut lower = lower_bound_from(&stats);
    if stats.truncated() {
        lower = sample_lower_bound(
            &family.members,
            lower,
            opts.depth,
            opts.cap.min(1 << 16) as usize,
            opts.sample_seed,
            opts.exec,
        )?;
        notes.push(format!(
            "lower bound tightened with {} sampled sequences",
            lower.sampled
        ));
    }
    trace.push(MethodBound::new(
        "spectral-lower",
        BoundKind::Lower,
        lower.best_depth,
        lower.value,
    ));

    let obstruction = obstruction_certificate(mdp, &family.policies, opts.exec)?;
    if obstruction.is_some() {
        trace.push(MethodBound::new("obstruction", BoundKind::Lower, 1, gamma));
    }

    let upper_bound = trace
        .iter()
        .filter(|m| m.kind == BoundKind::Upper)
        .map(|m| m.value)
        .fold(f64::INFINITY, f64::min);
    let lower_bound = trace
        .iter()
        .filter(|m| m.kind == BoundKind::Lower)
        .map(|m| m.value)
        .fold(0.0, f64::max);
    let lower_bound = if lower_bound > upper_bound {
        // eigenvalues of defective products are ill-conditioned; norms are not
        notes.push(format!(
            "spectral lower bound {lower_bound:e} exceeds certified upper bound {upper_bound:e}; clipped"
        ));
        upper_bound
    } else {
        lower_bound
    };
    let strict = if upper_bound < gamma - VERDICT_SLACK {
        Strictness::ProvenStrict
    } else if lower_bound >= gamma - VERDICT_SLACK {
        Strictness::ProvenNotStrict
    } else {
        Strictness::Undetermined
    };

    Ok(JsrCertificate {
        family_label: label,
        num_policies: family.len(),
        depth: opts.depth,
        depth_used: stats.depth_reached(),
        upper_bound,
        lower_bound,
        gamma,
        method_trace: trace,
        strict,
        obstruction,
        norm_bound,
        notes,
    })
}
