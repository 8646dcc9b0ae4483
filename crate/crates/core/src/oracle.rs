//! Brute-force enumeration oracles. Exponential by construction; every entry
//! point takes an explicit budget and refuses work beyond it.

use std::collections::{BTreeMap, HashMap};

use crate::chain::{transition_counts, CompleteChain, StateSpace};
use crate::error::{Error, Result};
use crate::filter::{apply_filter, FilterMatrix, FilteredChain};
use crate::matrix::{CountMatrix, TransitionMatrix};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

fn check_budget(k: usize, exponent: usize, budget: u128) -> Result<u128> {
    let required = (k as u128).checked_pow(exponent as u32).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(required)
}

fn check_dims(y: &FilteredChain, f: &FilterMatrix, p: &TransitionMatrix) -> Result<()> {
    if f.k() != y.k() {
        return Err(Error::DimensionMismatch { expected: y.k(), found: f.k() });
    }
    if p.k() != y.k() {
        return Err(Error::DimensionMismatch { expected: y.k(), found: p.k() });
    }
    Ok(())
}

fn path_weight(states: &[usize], p: &TransitionMatrix) -> f64 {
    states.windows(2).map(|w| p.get(w[0], w[1])).product()
}

#[derive(Debug, Clone, Default)]
pub struct CompletionSet {
    pub completions: Vec<(CompleteChain, f64)>,
}

impl CompletionSet {
    pub fn total_weight(&self) -> f64 {
        self.completions.iter().map(|(_, w)| w).sum()
    }

    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }
}

/// Every complete chain that filters to `y`, weighted by its transition
/// probabilities. Zero-weight chains are dropped.
pub fn enumerate_completions(
    y: &FilteredChain,
    f: &FilterMatrix,
    p: &TransitionMatrix,
    budget: u128,
) -> Result<CompletionSet> {
    check_dims(y, f, p)?;
    let k = y.k();
    let blanks: Vec<usize> = (0..y.len()).filter(|&i| y.symbols()[i].is_none()).collect();
    let total = check_budget(k, blanks.len(), budget)?;
    let mut states: Vec<usize> = y.symbols().iter().map(|s| s.unwrap_or(0)).collect();
    let mut out = CompletionSet::default();
    for mut code in 0..total {
        for &pos in &blanks {
            states[pos] = (code % k as u128) as usize;
            code /= k as u128;
        }
        let w = path_weight(&states, p);
        if w <= 0.0 {
            continue;
        }
        let x = CompleteChain::new(states.clone(), space_of(y))?;
        if apply_filter(&x, f)? == *y {
            out.completions.push((x, w));
        }
    }
    Ok(out)
}

fn space_of(y: &FilteredChain) -> StateSpace {
    StateSpace::new(y.k()).expect("filtered chains have at least two states")
}

/// E[n_ij | y] by weighted averaging over completions.
pub fn oracle_expected_counts(
    y: &FilteredChain,
    f: &FilterMatrix,
    p: &TransitionMatrix,
    budget: u128,
) -> Result<CountMatrix> {
    let set = enumerate_completions(y, f, p, budget)?;
    let total = set.total_weight();
    if set.is_empty() || total <= 0.0 {
        return Err(Error::EmptyCompletionSet);
    }
    let mut out = CountMatrix::zeros(y.k());
    for (x, w) in &set.completions {
        out.add_matrix(&transition_counts(x), w / total);
    }
    Ok(out)
}

/// P(φ_F(X) = y | X_0 = y_0), by summation. Zero for inconsistent patterns.
pub fn oracle_observed_likelihood(
    y: &FilteredChain,
    f: &FilterMatrix,
    p: &TransitionMatrix,
    budget: u128,
) -> Result<f64> {
    Ok(enumerate_completions(y, f, p, budget)?.total_weight())
}

/// All complete chains of a fixed length from a fixed initial state, grouped
/// by (filtered pattern, transition counts) so that pattern distributions can
/// be evaluated cheaply for many parameter values.
#[derive(Debug, Clone)]
pub struct PatternEnumerator {
    k: usize,
    patterns: Vec<FilteredChain>,
    /// (pattern index, counts of each transition, multiplicity)
    groups: Vec<(usize, Vec<u16>, u64)>,
}

impl PatternEnumerator {
    pub fn new(f: &FilterMatrix, len: usize, initial: usize, budget: u128) -> Result<Self> {
        let k = f.k();
        if initial >= k {
            return Err(Error::InvalidInput(format!("initial state {} outside 1..={}", initial + 1, k)));
        }
        if len < 2 {
            return Err(Error::InvalidInput("patterns need at least two positions".into()));
        }
        check_budget(k, len, budget)?;
        let free = len - 1;
        let total = (k as u128).pow(free as u32);
        let mut pattern_ids: HashMap<FilteredChain, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut grouped: BTreeMap<(usize, Vec<u16>), u64> = BTreeMap::new();
        let space = StateSpace::new(k)?;
        let mut states = vec![initial; len];
        for mut code in 0..total {
            for slot in states[1..].iter_mut() {
                *slot = (code % k as u128) as usize;
                code /= k as u128;
            }
            let x = CompleteChain::new(states.clone(), space)?;
            let y = apply_filter(&x, f)?;
            let next = patterns.len();
            let id = *pattern_ids.entry(y.clone()).or_insert_with(|| {
                patterns.push(y);
                next
            });
            let mut counts = vec![0u16; k * k];
            for w in states.windows(2) {
                counts[w[0] * k + w[1]] += 1;
            }
            *grouped.entry((id, counts)).or_insert(0) += 1;
        }
        let groups = grouped.into_iter().map(|((id, c), m)| (id, c, m)).collect();
        Ok(Self { k, patterns, groups })
    }

    pub fn patterns(&self) -> &[FilteredChain] {
        &self.patterns
    }

    /// Probability of each pattern, indexed like [`Self::patterns`].
    pub fn distribution(&self, p: &TransitionMatrix) -> Result<Vec<f64>> {
        if p.k() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: p.k() });
        }
        let mut out = vec![0.0; self.patterns.len()];
        for (id, counts, mult) in &self.groups {
            let mut w = *mult as f64;
            for (idx, &c) in counts.iter().enumerate() {
                if c > 0 {
                    w *= p.get(idx / self.k, idx % self.k).powi(c as i32);
                }
            }
            out[*id] += w;
        }
        Ok(out)
    }

    pub fn tv_distance(&self, p1: &TransitionMatrix, p2: &TransitionMatrix) -> Result<f64> {
        let a = self.distribution(p1)?;
        let b = self.distribution(p2)?;
        Ok(0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>())
    }
}

/// Total-variation distance between the filtered-pattern distributions of
/// length-`len` chains started at `initial` under `p1` and `p2`.
pub fn distinguishability_check(
    f: &FilterMatrix,
    p1: &TransitionMatrix,
    p2: &TransitionMatrix,
    len: usize,
    initial: usize,
    budget: u128,
) -> Result<f64> {
    PatternEnumerator::new(f, len, initial, budget)?.tv_distance(p1, p2)
}
