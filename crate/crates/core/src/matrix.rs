//! Transition matrices, support masks, count matrices and parameter layouts.
//!
//! States are 0-based everywhere inside the crate; file formats and reports
//! use 1-based labels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance on row sums of a stochastic matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Boolean k×k mask marking which transitions may have positive probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    k: usize,
    bits: Vec<bool>,
}

impl SupportMask {
    pub fn full(k: usize) -> Self {
        Self { k, bits: vec![true; k * k] }
    }

    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                bits.push(f(i, j));
            }
        }
        Self { k, bits }
    }

    /// Builds a mask from nested rows; every row must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: bad.len() });
        }
        Ok(Self { k, bits: rows.concat() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.k + j]
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn count_allowed(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Every row and every column has at least one allowed entry.
    pub fn satisfies_a1(&self) -> bool {
        let k = self.k;
        (0..k).all(|i| (0..k).any(|j| self.get(i, j))) && (0..k).all(|j| (0..k).any(|i| self.get(i, j)))
    }

    /// Allowed target states of row `i`, in increasing order.
    pub fn row_support(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&j| self.get(i, j))
    }
}

/// A row-stochastic matrix together with its structural-zero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    probs: DMatrix<f64>,
    support: SupportMask,
}

impl TransitionMatrix {
    /// Validates shape, nonnegativity, structural zeros, row sums and
    /// assumption A1 on the support.
    pub fn new(probs: DMatrix<f64>, support: SupportMask) -> Result<Self> {
        let k = probs.nrows();
        if probs.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "transition matrix must be square, got {}x{}",
                k,
                probs.ncols()
            )));
        }
        if k < 2 {
            return Err(Error::InvalidInput("need at least 2 states".into()));
        }
        if support.k() != k {
            return Err(Error::DimensionMismatch { expected: k, found: support.k() });
        }
        if !support.satisfies_a1() {
            return Err(Error::InvalidInput(
                "support must allow at least one transition in every row and column".into(),
            ));
        }
        for i in 0..k {
            let mut sum = 0.0;
            for j in 0..k {
                let p = probs[(i, j)];
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "entry ({}, {}) = {} is not a probability",
                        i + 1,
                        j + 1,
                        p
                    )));
                }
                if p > 0.0 && !support.get(i, j) {
                    return Err(Error::InvalidInput(format!(
                        "entry ({}, {}) is positive but is a structural zero",
                        i + 1,
                        j + 1
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!("row {} sums to {}", i + 1, sum)));
            }
        }
        Ok(Self { probs, support })
    }

    /// Support taken as the positive entries of `probs`.
    pub fn from_probs(probs: DMatrix<f64>) -> Result<Self> {
        let k = probs.nrows();
        let support = SupportMask::from_fn(k, |i, j| j < probs.ncols() && probs[(i, j)] > 0.0);
        Self::new(probs, support)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch { expected: k, found: bad.len() });
        }
        Self::from_probs(DMatrix::from_row_slice(k, k, &rows.concat()))
    }

    /// Uniform over each row's allowed targets.
    pub fn uniform(support: &SupportMask) -> Result<Self> {
        let k = support.k();
        let mut probs = DMatrix::zeros(k, k);
        for i in 0..k {
            let n = support.row_support(i).count();
            for j in support.row_support(i) {
                probs[(i, j)] = 1.0 / n as f64;
            }
        }
        Self::new(probs, support.clone())
    }

    /// Used where the caller has already normalised rows on the support.
    pub(crate) fn from_parts_unchecked(probs: DMatrix<f64>, support: SupportMask) -> Self {
        Self { probs, support }
    }

    pub fn k(&self) -> usize {
        self.probs.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[(i, j)]
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn support(&self) -> &SupportMask {
        &self.support
    }

    /// Every allowed entry is strictly positive.
    pub fn is_interior(&self) -> bool {
        let k = self.k();
        (0..k).all(|i| (0..k).all(|j| !self.support.get(i, j) || self.probs[(i, j)] > 0.0))
    }

    pub fn max_abs_diff(&self, other: &TransitionMatrix) -> f64 {
        (&self.probs - &other.probs).amax()
    }
}

/// k×k nonnegative transition counts. Real-valued so that complete-data
/// counts and conditional expected counts share one type.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: DMatrix<f64>,
}

impl CountMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { counts: DMatrix::zeros(k, k) }
    }

    pub fn from_matrix(counts: DMatrix<f64>) -> Self {
        Self { counts }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.len();
        Self { counts: DMatrix::from_row_slice(k, k, &rows.concat()) }
    }

    pub fn k(&self) -> usize {
        self.counts.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[(i, j)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, w: f64) {
        self.counts[(i, j)] += w;
    }

    pub fn add_matrix(&mut self, other: &CountMatrix, scale: f64) {
        self.counts += &other.counts * scale;
    }

    pub fn total(&self) -> f64 {
        self.counts.sum()
    }

    pub fn row_total(&self, i: usize) -> f64 {
        self.counts.row(i).sum()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.counts
    }
}

/// The k²−k free parameters in row-major order, each row omitting its last
/// column: (p_11, …, p_1(k−1), p_21, …, p_k(k−1)).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    k: usize,
    theta: Vec<f64>,
}

impl ParamVector {
    pub fn new(k: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != k * (k - 1) {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters for {} states, got {}",
                k * (k - 1),
                k,
                theta.len()
            )));
        }
        for (idx, &t) in theta.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidInput(format!("theta[{}] = {} outside [0, 1]", idx + 1, t)));
            }
        }
        for i in 0..k {
            let s: f64 = theta[i * (k - 1)..(i + 1) * (k - 1)].iter().sum();
            if s > 1.0 + ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!("row {} partial sum {} exceeds 1", i + 1, s)));
            }
        }
        Ok(Self { k, theta })
    }

    pub fn from_matrix(p: &TransitionMatrix) -> Self {
        let k = p.k();
        let theta = (0..k).flat_map(|i| (0..k - 1).map(move |j| p.get(i, j))).collect();
        Self { k, theta }
    }

    /// Reconstructs the matrix with p_ik = 1 − Σ_{j<k} p_ij.
    pub fn to_matrix(&self, support: &SupportMask) -> Result<TransitionMatrix> {
        let k = self.k;
        let mut probs = DMatrix::zeros(k, k);
        for i in 0..k {
            let row = &self.theta[i * (k - 1)..(i + 1) * (k - 1)];
            for (j, &t) in row.iter().enumerate() {
                probs[(i, j)] = t;
            }
            probs[(i, k - 1)] = (1.0 - row.iter().sum::<f64>()).max(0.0);
        }
        TransitionMatrix::new(probs, support.clone())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Free coordinates of a transition matrix under a support mask.
///
/// Each row's last allowed column is its reference column, determined by the
/// others through the row-sum constraint; every other allowed entry is a free
/// coordinate. With full support this is exactly the [`ParamVector`] layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    k: usize,
    coords: Vec<(usize, usize)>,
    reference: Vec<usize>,
}

impl ParamLayout {
    pub fn new(support: &SupportMask) -> Self {
        let k = support.k();
        let mut coords = Vec::new();
        let mut reference = Vec::with_capacity(k);
        for i in 0..k {
            let allowed: Vec<usize> = support.row_support(i).collect();
            let (&last, rest) = allowed.split_last().expect("A1 guarantees a nonempty row");
            coords.extend(rest.iter().map(|&j| (i, j)));
            reference.push(last);
        }
        Self { k, coords, reference }
    }

    pub fn full(k: usize) -> Self {
        Self::new(&SupportMask::full(k))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// (row, column) of each free coordinate, 0-based.
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn reference_column(&self, row: usize) -> usize {
        self.reference[row]
    }

    /// Indices into the free vector belonging to `row`.
    pub fn row_indices(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        self.coords.iter().enumerate().filter(move |(_, &(i, _))| i == row).map(|(idx, _)| idx)
    }

    pub fn extract(&self, p: &TransitionMatrix) -> Vec<f64> {
        self.coords.iter().map(|&(i, j)| p.get(i, j)).collect()
    }

    /// Reference probability of `row` implied by `theta`.
    pub fn reference_prob(&self, theta: &[f64], row: usize) -> f64 {
        1.0 - self.row_indices(row).map(|idx| theta[idx]).sum::<f64>()
    }

    /// Whether `theta` lies strictly inside the parameter space.
    pub fn is_interior(&self, theta: &[f64]) -> bool {
        theta.iter().all(|&t| t > 0.0) && (0..self.k).all(|i| self.reference_prob(theta, i) > 0.0)
    }

    pub fn assemble(&self, theta: &[f64], support: &SupportMask) -> Result<TransitionMatrix> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} free parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        let k = self.k;
        let mut probs = DMatrix::zeros(k, k);
        for (&(i, j), &t) in self.coords.iter().zip(theta) {
            probs[(i, j)] = t;
        }
        for i in 0..k {
            probs[(i, self.reference[i])] = self.reference_prob(theta, i);
        }
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidInput("parameter vector lies outside the simplex".into()));
        }
        Ok(TransitionMatrix::from_parts_unchecked(probs, support.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_vector_round_trip() {
        let p = TransitionMatrix::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.8, 0.1, 0.1],
            vec![0.7, 0.1, 0.2],
        ])
        .unwrap();
        let theta = ParamVector::from_matrix(&p);
        assert_eq!(theta.as_slice(), &[0.2, 0.3, 0.8, 0.1, 0.7, 0.1]);
        let back = theta.to_matrix(p.support()).unwrap();
        assert!(back.max_abs_diff(&p) < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(TransitionMatrix::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(TransitionMatrix::from_rows(&[vec![1.2, -0.2], vec![0.5, 0.5]]).is_err());
        // column 2 never reachable: violates A1
        assert!(TransitionMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn positive_entry_on_structural_zero_is_rejected() {
        let support = SupportMask::from_rows(&[vec![true, false], vec![true, true]]).unwrap();
        let probs = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(TransitionMatrix::new(probs, support).is_err());
    }

    #[test]
    fn layout_with_structural_zeros() {
        let support = SupportMask::from_rows(&[
            vec![true, true, false],
            vec![false, true, true],
            vec![true, true, true],
        ])
        .unwrap();
        let layout = ParamLayout::new(&support);
        assert_eq!(layout.coords(), &[(0, 0), (1, 1), (2, 0), (2, 1)]);
        assert_eq!(layout.reference_column(0), 1);
        let p = TransitionMatrix::uniform(&support).unwrap();
        let theta = layout.extract(&p);
        let back = layout.assemble(&theta, &support).unwrap();
        assert!(back.max_abs_diff(&p) < 1e-15);
        assert_eq!(ParamLayout::full(3).dim(), 6);
    }
}
