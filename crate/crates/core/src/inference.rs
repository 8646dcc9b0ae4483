//! Wald-type tests and confidence intervals from an estimate and its
//! covariance.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    /// Degrees of freedom; `None` for the normal test.
    pub df: Option<usize>,
    pub p_value: f64,
    /// (α, rejected at α) for each requested level.
    pub decisions: Vec<(f64, bool)>,
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("significance level {} is not in (0, 1)", alpha)));
    }
    Ok(())
}

/// χ² = (θ̂ − θ₀)ᵀ V⁻¹ (θ̂ − θ₀) with df = dim θ.
pub fn chi_square_test(theta_hat: &[f64], theta0: &[f64], v: &DMatrix<f64>, levels: &[f64]) -> Result<TestReport> {
    let d = theta_hat.len();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: theta0.len() });
    }
    if v.nrows() != d || v.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v.nrows() });
    }
    if d == 0 {
        return Err(Error::InvalidInput("no parameters to test".into()));
    }
    levels.iter().try_for_each(|&a| check_level(a))?;
    let diff = DVector::from_iterator(d, theta_hat.iter().zip(theta0).map(|(a, b)| a - b));
    let chol = v.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let statistic = diff.dot(&chol.solve(&diff));
    if !statistic.is_finite() {
        return Err(Error::NonFinite);
    }
    let dist = ChiSquared::new(d as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let p_value = dist.sf(statistic);
    let decisions = levels.iter().map(|&a| (a, statistic > dist.inverse_cdf(1.0 - a))).collect();
    Ok(TestReport { statistic, df: Some(d), p_value, decisions })
}

fn z_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided z test of one coordinate: τ = (θ̂ − θ₀)/√s.
pub fn z_test(estimate: f64, null: f64, variance: f64, levels: &[f64]) -> Result<TestReport> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::NonPositiveVariance(variance));
    }
    levels.iter().try_for_each(|&a| check_level(a))?;
    let statistic = (estimate - null) / variance.sqrt();
    let p_value = 2.0 * Normal::standard().sf(statistic.abs());
    let decisions = levels.iter().map(|&a| (a, statistic.abs() > z_quantile(a))).collect();
    Ok(TestReport { statistic, df: None, p_value, decisions })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Intersection with [0, 1], and whether anything was cut off.
    pub fn clamp_unit(&self) -> (ConfidenceInterval, bool) {
        let lower = self.lower.max(0.0);
        let upper = self.upper.min(1.0);
        (ConfidenceInterval { lower, upper }, lower != self.lower || upper != self.upper)
    }
}

/// θ̂ ± √s · z_{α/2}.
pub fn confidence_interval(estimate: f64, variance: f64, alpha: f64) -> Result<ConfidenceInterval> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::NonPositiveVariance(variance));
    }
    check_level(alpha)?;
    let half = variance.sqrt() * z_quantile(alpha);
    Ok(ConfidenceInterval { lower: estimate - half, upper: estimate + half })
}
