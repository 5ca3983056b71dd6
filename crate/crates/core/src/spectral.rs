//! Eigenvalue moduli, ergodicity coefficients, and the communicating-class
//! structure of policy-induced state chains.

use nalgebra::Schur;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mdp::{state_chain, Matrix, Policy, ValidatedMdp, Vector};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// All eigenvalues of a square real matrix.
///
/// Reduces to Hessenberg form and runs shifted QR to a real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // Deflation is tested relative to neighbouring diagonal entries, which
    // stalls when those are ~0; a diagonal shift moves them away from zero
    // and translates the spectrum exactly.
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for shift in [0.0, 0.75 * scale, -1.37 * scale, 2.9 * scale] {
        let shifted = m + Matrix::identity(m.nrows(), m.ncols()) * shift;
        if let Some(schur) = Schur::try_new(shifted, SCHUR_EPS, SCHUR_MAX_ITER) {
            return Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - Complex64::new(shift, 0.0))
                .collect());
        }
    }
    Err(Error::EigenNoConvergence { dim: m.nrows() })
}

/// Eigenvalue moduli, descending.
pub fn eigen_moduli(m: &Matrix) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.norm()).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigen_moduli(m)?.first().copied().unwrap_or(0.0))
}

/// Second-largest eigenvalue modulus of a row-stochastic matrix.
///
/// The eigenvalue closest to the Perron root `1` is removed once; any
/// further copy of `1` stays and is reported.
pub fn second_modulus(b: &Matrix) -> Result<f64> {
    let mut eig = eigenvalues(b)?;
    if let Some(perron) = eig
        .iter()
        .enumerate()
        .min_by(|(_, x), (_, y)| (*x - 1.0).norm().total_cmp(&(*y - 1.0).norm()))
        .map(|(i, _)| i)
    {
        eig.swap_remove(perron);
    }
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// `Σ_υ min(B_xυ, B_yυ)`.
fn row_overlap(b: &Matrix, x: usize, y: usize) -> f64 {
    b.row(x)
        .iter()
        .zip(b.row(y).iter())
        .map(|(p, q)| p.min(*q))
        .sum()
}

/// `min_{x,y} Σ_υ min(B_xυ, B_yυ)`.
pub fn min_row_overlap(b: &Matrix) -> f64 {
    let n = b.nrows();
    let mut best = f64::INFINITY;
    for x in 0..n {
        for y in x..n {
            best = best.min(row_overlap(b, x, y));
        }
    }
    best
}

/// Dobrushin coefficient computed by both standard formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dobrushin {
    /// `1 − min_{x,y} Σ_υ min(B_xυ, B_yυ)`.
    pub overlap_form: f64,
    /// `½ max_{x,y} Σ_υ |B_xυ − B_yυ|`.
    pub total_variation_form: f64,
}

impl Dobrushin {
    pub fn value(&self) -> f64 {
        self.overlap_form
    }

    pub fn discrepancy(&self) -> f64 {
        (self.overlap_form - self.total_variation_form).abs()
    }
}

pub fn dobrushin_both(b: &Matrix) -> Dobrushin {
    let n = b.nrows();
    let mut tv = 0.0f64;
    for x in 0..n {
        for y in x + 1..n {
            let d: f64 = b
                .row(x)
                .iter()
                .zip(b.row(y).iter())
                .map(|(p, q)| (p - q).abs())
                .sum();
            tv = tv.max(0.5 * d);
        }
    }
    Dobrushin {
        overlap_form: 1.0 - min_row_overlap(b),
        total_variation_form: tv,
    }
}

/// `τ_D(B)`.
pub fn dobrushin(b: &Matrix) -> f64 {
    dobrushin_both(b).value()
}

/// `max(v) − min(v)`.
pub fn diameter(v: &Vector) -> f64 {
    v.max() - v.min()
}

/// Every pair of rows shares a strictly positive column.
pub fn is_scrambling(b: &Matrix) -> bool {
    let n = b.nrows();
    (0..n).all(|x| {
        (x..n).all(|y| {
            b.row(x)
                .iter()
                .zip(b.row(y).iter())
                .any(|(p, q)| *p > 0.0 && *q > 0.0)
        })
    })
}

/// Closed classes, transient states and periods of a state chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStructure {
    /// Each class sorted ascending; classes ordered by smallest member.
    pub closed_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    /// Period of each closed class, aligned with `closed_classes`.
    pub periods: Vec<usize>,
    pub is_unichain: bool,
    pub is_aperiodic: bool,
}

/// Structure of `P_π = Π^π P` for a deterministic (or stochastic) policy.
pub fn chain_structure<P: Policy + ?Sized>(mdp: &ValidatedMdp, policy: &P) -> ChainStructure {
    chain_structure_of(&state_chain(mdp, policy))
}

/// Structure of the support digraph of a square nonnegative matrix.
pub fn chain_structure_of(chain: &Matrix) -> ChainStructure {
    let n = chain.nrows();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| chain[(i, j)] > 0.0).collect())
        .collect();
    let comp = strongly_connected(&succ);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);

    let mut members = vec![Vec::new(); ncomp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    let mut closed = vec![true; ncomp];
    for (v, out) in succ.iter().enumerate() {
        if out.iter().any(|&w| comp[w] != comp[v]) {
            closed[comp[v]] = false;
        }
    }

    let mut closed_classes: Vec<Vec<usize>> = members
        .iter()
        .enumerate()
        .filter(|(c, _)| closed[*c])
        .map(|(_, m)| m.clone())
        .collect();
    closed_classes.sort();
    let mut transient_states: Vec<usize> = (0..n).filter(|&v| !closed[comp[v]]).collect();
    transient_states.sort_unstable();
    let periods: Vec<usize> = closed_classes
        .iter()
        .map(|class| class_period(&succ, class))
        .collect();
    ChainStructure {
        is_unichain: closed_classes.len() == 1,
        is_aperiodic: periods.iter().all(|&p| p == 1),
        closed_classes,
        transient_states,
        periods,
    }
}

/// Period of a strongly connected class: gcd of `level(u) + 1 − level(v)`
/// over edges inside the class, with BFS levels from the smallest member.
fn class_period(succ: &[Vec<usize>], class: &[usize]) -> usize {
    let n = succ.len();
    let mut inside = vec![false; n];
    class.iter().for_each(|&v| inside[v] = true);
    let mut level = vec![usize::MAX; n];
    let root = class[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for &v in &succ[u] {
            if !inside[v] {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    // a single state without a self-loop cannot be closed, so g > 0 here
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Tarjan's algorithm; returns the component id of each vertex.
fn strongly_connected(succ: &[Vec<usize>]) -> Vec<usize> {
    struct State<'a> {
        succ: &'a [Vec<usize>],
        index: Vec<usize>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next_index: usize,
        next_comp: usize,
    }

    fn visit(st: &mut State<'_>, v: usize) {
        st.index[v] = st.next_index;
        st.low[v] = st.next_index;
        st.next_index += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for i in 0..st.succ[v].len() {
            let w = st.succ[v][i];
            if st.index[w] == usize::MAX {
                visit(st, w);
                st.low[v] = st.low[v].min(st.low[w]);
            } else if st.on_stack[w] {
                st.low[v] = st.low[v].min(st.index[w]);
            }
        }
        if st.low[v] == st.index[v] {
            loop {
                let w = st.stack.pop().expect("non-empty");
                st.on_stack[w] = false;
                st.comp[w] = st.next_comp;
                if w == v {
                    break;
                }
            }
            st.next_comp += 1;
        }
    }

    let n = succ.len();
    let mut st = State {
        succ,
        index: vec![usize::MAX; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![usize::MAX; n],
        next_index: 0,
        next_comp: 0,
    };
    for v in 0..n {
        if st.index[v] == usize::MAX {
            visit(&mut st, v);
        }
    }
    st.comp
}
