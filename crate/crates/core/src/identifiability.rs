//! Sufficient conditions for a filter to keep every transition probability
//! identifiable.
//!
//! Three structured families C1, C2, C3 are identifiable, and so is every
//! filter that records at least as much as a member of one of them (its
//! closure under ⪰). When the model has structural zeros the member must
//! also observe at least one allowed transition in every row (class R).
//!
//! A filter is certified by exhibiting a witness D ⪯ F in C1 ∪ C2 ∪ C3. The
//! search tries every (α, β) pair and completes the permutation part of D
//! with a bipartite perfect matching over F's ones.

use std::fmt;

use crate::filter::FilterMatrix;
use crate::matrix::SupportMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterClass {
    C1,
    C2,
    C3,
}

impl fmt::Display for FilterClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FilterClass::C1 => "C1",
            FilterClass::C2 => "C2",
            FilterClass::C3 => "C3",
        };
        f.write_str(s)
    }
}

/// Indices (α, β), 0-based, that certify class membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassWitness {
    pub alpha: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureWitness {
    pub matrix: FilterMatrix,
    pub class: FilterClass,
    pub alpha: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    SufficientIdentifiable,
    /// The sufficient conditions do not hold. This is not a proof of
    /// non-identifiability.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifiabilityVerdict {
    pub in_c1: bool,
    pub in_c2: bool,
    pub in_c3: bool,
    pub closure_witness: Option<ClosureWitness>,
    pub satisfies_r: bool,
    pub verdict: Verdict,
}

fn row_ones(f: &FilterMatrix, i: usize) -> usize {
    (0..f.k()).filter(|&j| f.get(i, j)).count()
}

fn col_ones(f: &FilterMatrix, j: usize) -> usize {
    (0..f.k()).filter(|&i| f.get(i, j)).count()
}

/// Row α and column β are zero; every other row and column has exactly one 1.
pub fn in_class_c1(f: &FilterMatrix) -> Option<ClassWitness> {
    let k = f.k();
    let alpha = (0..k).find(|&i| row_ones(f, i) == 0)?;
    let beta = (0..k).find(|&j| col_ones(f, j) == 0)?;
    let rows_ok = (0..k).filter(|&i| i != alpha).all(|i| row_ones(f, i) == 1);
    let cols_ok = (0..k).filter(|&j| j != beta).all(|j| col_ones(f, j) == 1);
    (rows_ok && cols_ok).then_some(ClassWitness { alpha, beta })
}

/// Columns α, β are zero; rows α, β are one outside columns {α, β}; the
/// submatrix without rows and columns {α, β} is a permutation matrix.
pub fn in_class_c2(f: &FilterMatrix) -> Option<ClassWitness> {
    let k = f.k();
    if k < 3 {
        return None;
    }
    for alpha in 0..k {
        for beta in alpha + 1..k {
            let rest: Vec<usize> = (0..k).filter(|&t| t != alpha && t != beta).collect();
            let zero_cols = col_ones(f, alpha) == 0 && col_ones(f, beta) == 0;
            let full_rows = rest.iter().all(|&j| f.get(alpha, j) && f.get(beta, j));
            let perm = rest.iter().all(|&i| rest.iter().filter(|&&j| f.get(i, j)).count() == 1)
                && rest.iter().all(|&j| rest.iter().filter(|&&i| f.get(i, j)).count() == 1);
            if zero_cols && full_rows && perm {
                return Some(ClassWitness { alpha, beta });
            }
        }
    }
    None
}

/// The transpose of the C2 condition.
pub fn in_class_c3(f: &FilterMatrix) -> Option<ClassWitness> {
    in_class_c2(&f.transpose())
}

/// Every row records at least one transition that the support allows.
pub fn satisfies_r(f: &FilterMatrix, support: &SupportMask) -> bool {
    let k = f.k();
    (0..k).all(|i| (0..k).any(|j| f.get(i, j) && support.get(i, j)))
}

/// Kuhn's augmenting-path matching; returns a perfect matching of `rows`
/// onto `cols` if one exists.
fn perfect_matching(
    rows: &[usize],
    cols: &[usize],
    edge: impl Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    if rows.len() != cols.len() {
        return None;
    }
    let adj: Vec<Vec<usize>> =
        rows.iter().map(|&r| (0..cols.len()).filter(|&c| edge(r, cols[c])).collect()).collect();
    let mut owner: Vec<Option<usize>> = vec![None; cols.len()];

    fn augment(r: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &c in &adj[r] {
            if seen[c] {
                continue;
            }
            seen[c] = true;
            if owner[c].is_none_or(|other| augment(other, adj, owner, seen)) {
                owner[c] = Some(r);
                return true;
            }
        }
        false
    }

    for r in 0..rows.len() {
        let mut seen = vec![false; cols.len()];
        if !augment(r, &adj, &mut owner, &mut seen) {
            return None;
        }
    }
    let mut pairs: Vec<(usize, usize)> =
        owner.iter().enumerate().map(|(c, r)| (rows[r.expect("perfect")], cols[c])).collect();
    pairs.sort_unstable();
    Some(pairs)
}

/// Searches for D ⪯ F with D in C1 ∪ C2 ∪ C3. When `support` has structural
/// zeros, D must also satisfy R with respect to it.
pub fn closure_witness(f: &FilterMatrix, support: Option<&SupportMask>) -> Option<ClosureWitness> {
    let k = f.k();
    let restricted = support.filter(|s| !s.is_full());
    let accept = |d: &FilterMatrix| restricted.is_none_or(|s| satisfies_r(d, s));
    // under R every row of D keeps a single allowed 1, so matched edges must be allowed
    let usable = |i: usize, j: usize| f.get(i, j) && restricted.is_none_or(|s| s.get(i, j));

    for alpha in 0..k {
        for beta in 0..k {
            let rows: Vec<usize> = (0..k).filter(|&i| i != alpha).collect();
            let cols: Vec<usize> = (0..k).filter(|&j| j != beta).collect();
            if let Some(m) = perfect_matching(&rows, &cols, |i, j| f.get(i, j)) {
                let d = FilterMatrix::from_fn(k, |i, j| m.contains(&(i, j)));
                if accept(&d) {
                    return Some(ClosureWitness { matrix: d, class: FilterClass::C1, alpha, beta });
                }
            }
        }
    }

    if k < 3 {
        return None;
    }
    for alpha in 0..k {
        for beta in alpha + 1..k {
            let rest: Vec<usize> = (0..k).filter(|&t| t != alpha && t != beta).collect();
            if rest.iter().all(|&j| f.get(alpha, j) && f.get(beta, j)) {
                if let Some(m) = perfect_matching(&rest, &rest, usable) {
                    let d = FilterMatrix::from_fn(k, |i, j| {
                        ((i == alpha || i == beta) && rest.contains(&j)) || m.contains(&(i, j))
                    });
                    if accept(&d) {
                        return Some(ClosureWitness { matrix: d, class: FilterClass::C2, alpha, beta });
                    }
                }
            }
        }
    }
    for alpha in 0..k {
        for beta in alpha + 1..k {
            let rest: Vec<usize> = (0..k).filter(|&t| t != alpha && t != beta).collect();
            if rest.iter().all(|&i| f.get(i, alpha) && f.get(i, beta)) {
                if let Some(m) = perfect_matching(&rest, &rest, |i, j| f.get(i, j)) {
                    let d = FilterMatrix::from_fn(k, |i, j| {
                        ((j == alpha || j == beta) && rest.contains(&i)) || m.contains(&(i, j))
                    });
                    if accept(&d) {
                        return Some(ClosureWitness { matrix: d, class: FilterClass::C3, alpha, beta });
                    }
                }
            }
        }
    }
    None
}

pub fn identifiability_verdict(f: &FilterMatrix, support: Option<&SupportMask>) -> IdentifiabilityVerdict {
    let full = SupportMask::full(f.k());
    let closure_witness = closure_witness(f, support);
    let verdict =
        if closure_witness.is_some() { Verdict::SufficientIdentifiable } else { Verdict::Unknown };
    IdentifiabilityVerdict {
        in_c1: in_class_c1(f).is_some(),
        in_c2: in_class_c2(f).is_some(),
        in_c3: in_class_c3(f).is_some(),
        closure_witness,
        satisfies_r: satisfies_r(f, support.unwrap_or(&full)),
        verdict,
    }
}
