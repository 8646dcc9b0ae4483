//! Complete chains: simulation, transition counting and the complete-data MLE.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{CountMatrix, SupportMask, TransitionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateSpace {
    k: usize,
}

impl StateSpace {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 states, got {}", k)));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// A fully observed realisation x_0, …, x_n (0-based state indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteChain {
    states: Vec<usize>,
    space: StateSpace,
}

impl CompleteChain {
    pub fn new(states: Vec<usize>, space: StateSpace) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a chain needs at least 2 states, got {}",
                states.len()
            )));
        }
        if let Some(&s) = states.iter().find(|&&s| s >= space.k()) {
            return Err(Error::InvalidInput(format!(
                "state label {} outside 1..{}",
                s + 1,
                space.k()
            )));
        }
        Ok(Self { states, space })
    }

    /// Builds a chain from 1-based labels.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let space = StateSpace::new(k)?;
        let states = labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    Err(Error::InvalidInput("state labels start at 1".into()))
                } else {
                    Ok(l - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, space)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn k(&self) -> usize {
        self.space.k()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of transitions n.
    pub fn transitions(&self) -> usize {
        self.states.len() - 1
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.states.iter().map(|s| s + 1)
    }
}

/// Draws a chain of `n` transitions from `initial` (0-based). The same seed
/// always yields the same chain.
pub fn simulate_chain(p: &TransitionMatrix, initial: usize, n: usize, seed: u64) -> Result<CompleteChain> {
    let k = p.k();
    if initial >= k {
        return Err(Error::InvalidInput(format!("initial state {} outside 1..{}", initial + 1, k)));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one transition".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(n + 1);
    let mut cur = initial;
    states.push(cur);
    for _ in 0..n {
        cur = sample_row(p, cur, rng.random::<f64>());
        states.push(cur);
    }
    CompleteChain::new(states, StateSpace::new(k)?)
}

fn sample_row(p: &TransitionMatrix, row: usize, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = row;
    for j in 0..p.k() {
        let pj = p.get(row, j);
        if pj <= 0.0 {
            continue;
        }
        acc += pj;
        last = j;
        if u < acc {
            return j;
        }
    }
    // rounding left u just above the cumulative sum
    last
}

pub fn transition_counts(x: &CompleteChain) -> CountMatrix {
    let mut counts = CountMatrix::zeros(x.k());
    for w in x.states().windows(2) {
        counts.add(w[0], w[1], 1.0);
    }
    counts
}

/// p̂_ij = n_ij / n_i·, restricted to `support`.
pub fn complete_mle(counts: &CountMatrix, support: &SupportMask) -> Result<TransitionMatrix> {
    let k = counts.k();
    if support.k() != k {
        return Err(Error::DimensionMismatch { expected: k, found: support.k() });
    }
    let mut probs = DMatrix::zeros(k, k);
    for i in 0..k {
        let total = counts.row_total(i);
        if total <= 0.0 {
            return Err(Error::ZeroRowTotal { row: i + 1 });
        }
        for j in 0..k {
            let c = counts.get(i, j);
            if c > 0.0 && !support.get(i, j) {
                return Err(Error::InvalidInput(format!(
                    "transition {} -> {} observed but marked as a structural zero",
                    i + 1,
                    j + 1
                )));
            }
            probs[(i, j)] = c / total;
        }
    }
    Ok(TransitionMatrix::from_parts_unchecked(probs, support.clone()))
}
