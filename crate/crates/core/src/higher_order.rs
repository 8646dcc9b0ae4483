//! Embedding of an order-s chain into a first-order chain on s-tuples.
//!
//! A tuple (a_1, …, a_s) is labelled by its base-k positional code with the
//! oldest coordinate most significant: code = Σ a_t · k^(s−t), states 0-based.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::chain::{CompleteChain, StateSpace};
use crate::error::{Error, Result};
use crate::matrix::{SupportMask, TransitionMatrix};

/// Order-s transition probabilities keyed by (history a_1..a_s, next state).
pub type HigherOrderProbs = BTreeMap<(Vec<usize>, usize), f64>;

pub fn encode_tuple(tuple: &[usize], k: usize) -> usize {
    tuple.iter().fold(0, |code, &a| code * k + a)
}

pub fn decode_tuple(mut code: usize, k: usize, s: usize) -> Vec<usize> {
    let mut tuple = vec![0; s];
    for slot in tuple.iter_mut().rev() {
        *slot = code % k;
        code /= k;
    }
    tuple
}

fn check_order(s: usize) -> Result<()> {
    if s < 2 {
        return Err(Error::InvalidInput(format!("embedding order must be at least 2, got {}", s)));
    }
    Ok(())
}

/// Y_n = (X_n, …, X_{n+s−1}) as a chain over k^s tuple states.
pub fn embed_higher_order(x: &CompleteChain, s: usize) -> Result<CompleteChain> {
    check_order(s)?;
    if x.len() < s + 1 {
        return Err(Error::ChainTooShort { len: x.len(), order: s });
    }
    let k = x.k();
    let states = x.states().windows(s).map(|w| encode_tuple(w, k)).collect();
    CompleteChain::new(states, StateSpace::new(k.pow(s as u32))?)
}

/// Allowed tuple transitions: the target's first s−1 coordinates equal the
/// source's last s−1 coordinates. Exactly k^(s+1) entries are allowed.
pub fn embedded_support(k: usize, s: usize) -> Result<SupportMask> {
    check_order(s)?;
    let big = k.pow(s as u32);
    let tail = k.pow(s as u32 - 1);
    Ok(SupportMask::from_fn(big, |src, dst| src % tail == dst / k))
}

/// Reads p_{a_1..a_s : a_{s+1}} off an embedded transition matrix.
pub fn project_embedded_params(p_emb: &TransitionMatrix, k: usize, s: usize) -> Result<HigherOrderProbs> {
    check_order(s)?;
    let big = k.pow(s as u32);
    if p_emb.k() != big {
        return Err(Error::DimensionMismatch { expected: big, found: p_emb.k() });
    }
    let tail = k.pow(s as u32 - 1);
    let mut out = BTreeMap::new();
    for src in 0..big {
        let history = decode_tuple(src, k, s);
        for next in 0..k {
            let dst = (src % tail) * k + next;
            out.insert((history.clone(), next), p_emb.get(src, dst));
        }
    }
    Ok(out)
}

/// Inverse of [`project_embedded_params`].
pub fn embed_params(probs: &HigherOrderProbs, k: usize, s: usize) -> Result<TransitionMatrix> {
    let support = embedded_support(k, s)?;
    let big = k.pow(s as u32);
    let tail = k.pow(s as u32 - 1);
    let mut m = DMatrix::zeros(big, big);
    for ((history, next), &p) in probs {
        if history.len() != s || *next >= k || history.iter().any(|&a| a >= k) {
            return Err(Error::InvalidInput("history tuple does not match the order".into()));
        }
        let src = encode_tuple(history, k);
        m[(src, (src % tail) * k + next)] = p;
    }
    TransitionMatrix::new(m, support)
}
