//! EM estimation of transition probabilities from a filtered chain.
//!
//! The transition matrix is split into P⁰ (unrecorded transitions) and P¹
//! (recorded ones). A run of ν−1 blanks between observed states a and b can
//! only have been produced by a path of ν unrecorded transitions, whose total
//! probability is (P⁰)^ν[a][b]. The E-step distributes each gap's ν
//! transitions over (α, β) in proportion to
//!
//! ```text
//! (P⁰)^m[a][α] · P⁰[α][β] · (P⁰)^(ν−1−m)[β][b] / (P⁰)^ν[a][b]
//! ```
//!
//! for edge m of the gap. Trailing gaps replace the column b by row sums.
//! Forward and backward vectors are rescaled at every step so long gaps do
//! not underflow.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::{validate_consistency, FilterMatrix, FilteredChain};
use crate::matrix::{CountMatrix, ParamVector, SupportMask, TransitionMatrix};

/// P = P⁰ + P¹, with P⁰ holding the unrecorded and P¹ the recorded entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrices {
    pub p0: DMatrix<f64>,
    pub p1: DMatrix<f64>,
}

pub fn split_p(p: &TransitionMatrix, f: &FilterMatrix) -> Result<SplitMatrices> {
    let k = p.k();
    if f.k() != k {
        return Err(Error::DimensionMismatch { expected: k, found: f.k() });
    }
    let p0 = DMatrix::from_fn(k, k, |i, j| if f.get(i, j) { 0.0 } else { p.get(i, j) });
    let p1 = DMatrix::from_fn(k, k, |i, j| if f.get(i, j) { p.get(i, j) } else { 0.0 });
    Ok(SplitMatrices { p0, p1 })
}

/// (P⁰)^ν by repeated squaring; ν = 0 gives the identity.
pub fn unobserved_step_probs(s: &SplitMatrices, steps: usize) -> DMatrix<f64> {
    let k = s.p0.nrows();
    let mut result = DMatrix::identity(k, k);
    let mut base = s.p0.clone();
    let mut e = steps;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GapEnd {
    Observed(usize),
    EndOfChain,
}

/// A run of blanks: from observed state `from`, `steps` transitions to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GapSegment {
    pub from: usize,
    pub steps: usize,
    pub to: GapEnd,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Segments {
    /// Adjacent observed states (both endpoints known).
    pub pairs: Vec<(usize, usize)>,
    pub gaps: Vec<GapSegment>,
}

impl Segments {
    pub fn transitions(&self) -> usize {
        self.pairs.len() + self.gaps.iter().map(|g| g.steps).sum::<usize>()
    }
}

/// Partitions the transitions of `y` into observed pairs and gaps.
pub fn segment_chain(y: &FilteredChain) -> Segments {
    let sym = y.symbols();
    let mut seg = Segments::default();
    let mut last: Option<(usize, usize)> = None;
    for (p, s) in sym.iter().enumerate() {
        if let Some(b) = *s {
            if let Some((q, a)) = last {
                if p == q + 1 {
                    seg.pairs.push((a, b));
                } else {
                    seg.gaps.push(GapSegment { from: a, steps: p - q, to: GapEnd::Observed(b) });
                }
            }
            last = Some((p, b));
        }
    }
    if let Some((q, a)) = last {
        if q + 1 < sym.len() {
            seg.gaps.push(GapSegment { from: a, steps: sym.len() - 1 - q, to: GapEnd::EndOfChain });
        }
    }
    seg
}

/// Conditional expected counts contributed by one gap, and the log of its
/// probability (the gap's likelihood factor).
fn gap_posterior(g: &GapSegment, p0: &DMatrix<f64>) -> Result<(CountMatrix, f64)> {
    let k = p0.nrows();
    let nu = g.steps;
    let zero = || Error::ZeroDenominator { from: g.from + 1, steps: nu };

    // fwd[m] ∝ e_a (P⁰)^m, with log scale lf[m]
    let mut fwd = Vec::with_capacity(nu + 1);
    let mut lf = Vec::with_capacity(nu + 1);
    fwd.push(DVector::from_fn(k, |i, _| if i == g.from { 1.0 } else { 0.0 }));
    lf.push(0.0);
    for m in 1..=nu {
        let v = p0.tr_mul(&fwd[m - 1]);
        let c = v.sum();
        if c <= 0.0 {
            return Err(zero());
        }
        fwd.push(v / c);
        lf.push(lf[m - 1] + c.ln());
    }

    // bwd[r] ∝ (P⁰)^r e_b, or (P⁰)^r 1 at the end of the chain
    let mut bwd = Vec::with_capacity(nu);
    let mut lb = Vec::with_capacity(nu);
    bwd.push(match g.to {
        GapEnd::Observed(b) => DVector::from_fn(k, |i, _| if i == b { 1.0 } else { 0.0 }),
        GapEnd::EndOfChain => DVector::from_element(k, 1.0),
    });
    lb.push(0.0);
    for r in 1..nu {
        let v = p0 * &bwd[r - 1];
        let c = v.sum();
        if c <= 0.0 {
            return Err(zero());
        }
        bwd.push(v / c);
        lb.push(lb[r - 1] + c.ln());
    }

    let end_mass = match g.to {
        GapEnd::Observed(b) => fwd[nu][b],
        GapEnd::EndOfChain => fwd[nu].sum(),
    };
    if end_mass <= 0.0 {
        return Err(zero());
    }
    let log_den = lf[nu] + end_mass.ln();

    // each step's pairwise posterior sums to one, so normalise per step
    let mut counts = CountMatrix::zeros(k);
    let mut step = DMatrix::zeros(k, k);
    for m in 0..nu {
        let r = nu - 1 - m;
        for a in 0..k {
            for b in 0..k {
                step[(a, b)] = fwd[m][a] * p0[(a, b)] * bwd[r][b];
            }
        }
        let total = step.sum();
        if total <= 0.0 {
            return Err(zero());
        }
        counts.add_matrix(&CountMatrix::from_matrix(step.clone()), 1.0 / total);
    }
    Ok((counts, log_den))
}

/// Expected transition counts contributed by a single gap.
pub fn gap_expected_counts(g: &GapSegment, s: &SplitMatrices) -> Result<CountMatrix> {
    gap_posterior(g, &s.p0).map(|(c, _)| c)
}

/// A filtered chain prepared for repeated E-steps: validated, segmented,
/// with observed pairs tallied and identical gaps grouped.
#[derive(Debug, Clone)]
pub struct FilteredData {
    filter: FilterMatrix,
    support: SupportMask,
    pair_counts: CountMatrix,
    gaps: Vec<(GapSegment, usize)>,
    transitions: usize,
}

impl FilteredData {
    /// `support = None` means every transition is allowed.
    pub fn new(y: &FilteredChain, f: &FilterMatrix, support: Option<&SupportMask>) -> Result<Self> {
        let k = y.k();
        if f.k() != k {
            return Err(Error::DimensionMismatch { expected: k, found: f.k() });
        }
        let support = support.cloned().unwrap_or_else(|| SupportMask::full(k));
        if support.k() != k {
            return Err(Error::DimensionMismatch { expected: k, found: support.k() });
        }
        validate_consistency(y, f, Some(&support))?;
        let seg = segment_chain(y);
        let mut pair_counts = CountMatrix::zeros(k);
        for &(a, b) in &seg.pairs {
            pair_counts.add(a, b, 1.0);
        }
        let mut grouped: HashMap<GapSegment, usize> = HashMap::new();
        for g in &seg.gaps {
            *grouped.entry(*g).or_default() += 1;
        }
        let mut gaps: Vec<(GapSegment, usize)> = grouped.into_iter().collect();
        gaps.sort_unstable();
        Ok(Self { filter: f.clone(), support, pair_counts, gaps, transitions: y.transitions() })
    }

    pub fn k(&self) -> usize {
        self.filter.k()
    }

    pub fn filter(&self) -> &FilterMatrix {
        &self.filter
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    /// Expected counts given the data at `p`, and the observed log-likelihood at `p`.
    pub fn e_step_with_loglik(&self, p: &TransitionMatrix) -> Result<(CountMatrix, f64)> {
        let split = split_p(p, &self.filter)?;
        let mut counts = self.pair_counts.clone();
        let mut loglik = self.pairs_loglik(p);
        for (g, mult) in &self.gaps {
            let (c, log_den) = gap_posterior(g, &split.p0)?;
            counts.add_matrix(&c, *mult as f64);
            loglik += *mult as f64 * log_den;
        }
        Ok((counts, loglik))
    }

    pub fn e_step(&self, p: &TransitionMatrix) -> Result<CountMatrix> {
        self.e_step_with_loglik(p).map(|(c, _)| c)
    }

    fn pairs_loglik(&self, p: &TransitionMatrix) -> f64 {
        let k = self.k();
        let mut ll = 0.0;
        for a in 0..k {
            for b in 0..k {
                let n = self.pair_counts.get(a, b);
                if n > 0.0 {
                    ll += n * p.get(a, b).ln();
                }
            }
        }
        ll
    }

    /// log P(filtered chain | p); `-inf` when the data are impossible under `p`.
    pub fn observed_loglik(&self, p: &TransitionMatrix) -> f64 {
        let Ok(split) = split_p(p, &self.filter) else {
            return f64::NEG_INFINITY;
        };
        let mut ll = self.pairs_loglik(p);
        for (g, mult) in &self.gaps {
            match gap_posterior(g, &split.p0) {
                Ok((_, log_den)) => ll += *mult as f64 * log_den,
                Err(_) => return f64::NEG_INFINITY,
            }
        }
        ll
    }

    /// One EM update M(p).
    pub fn em_update(&self, p: &TransitionMatrix) -> Result<TransitionMatrix> {
        m_step(&self.e_step(p)?, &self.support)
    }
}

/// Row-normalised expected counts on the support.
pub fn m_step(e: &CountMatrix, support: &SupportMask) -> Result<TransitionMatrix> {
    let k = e.k();
    let mut probs = DMatrix::zeros(k, k);
    for i in 0..k {
        let total: f64 = support.row_support(i).map(|j| e.get(i, j)).sum();
        if total <= 0.0 {
            return Err(Error::ZeroRowTotal { row: i + 1 });
        }
        for j in support.row_support(i) {
            probs[(i, j)] = e.get(i, j) / total;
        }
    }
    Ok(TransitionMatrix::from_parts_unchecked(probs, support.clone()))
}

/// Expected counts for a filtered chain under full support.
pub fn e_step(y: &FilteredChain, p: &TransitionMatrix, f: &FilterMatrix) -> Result<CountMatrix> {
    FilteredData::new(y, f, Some(p.support()))?.e_step(p)
}

pub fn observed_loglik(y: &FilteredChain, p: &TransitionMatrix, f: &FilterMatrix) -> Result<f64> {
    Ok(FilteredData::new(y, f, Some(p.support()))?.observed_loglik(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    /// Stop once max |θ^(t+1) − θ^(t)| falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub estimate: TransitionMatrix,
    /// Number of EM updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub final_observed_loglik: f64,
    /// E-step counts at the final estimate.
    pub expected_counts: CountMatrix,
    /// Observed log-likelihood at each iterate, starting with θ₀.
    pub loglik_trace: Vec<f64>,
}

impl EmResult {
    pub fn theta_hat(&self) -> ParamVector {
        ParamVector::from_matrix(&self.estimate)
    }
}

pub fn run_em(data: &FilteredData, theta0: &TransitionMatrix, opts: EmOptions) -> Result<EmResult> {
    if theta0.k() != data.k() {
        return Err(Error::DimensionMismatch { expected: data.k(), found: theta0.k() });
    }
    if theta0.support() != data.support() {
        return Err(Error::InvalidInput("starting point must share the data's support".into()));
    }
    if !theta0.is_interior() {
        return Err(Error::InvalidInput("starting point must be strictly inside the support".into()));
    }
    let mut current = theta0.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let (counts, ll) = data.e_step_with_loglik(&current)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite);
        }
        trace.push(ll);
        let next = m_step(&counts, data.support())?;
        let delta = next.max_abs_diff(&current);
        current = next;
        iterations += 1;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let (expected_counts, final_ll) = data.e_step_with_loglik(&current)?;
    if !final_ll.is_finite() {
        return Err(Error::NonFinite);
    }
    trace.push(final_ll);
    Ok(EmResult {
        estimate: current,
        iterations,
        converged,
        final_observed_loglik: final_ll,
        expected_counts,
        loglik_trace: trace,
    })
}
