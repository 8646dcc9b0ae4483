//! Supplemented EM: the large-sample covariance of the EM estimate.
//!
//! The rate matrix M₁ (row i holds ∂M_j/∂θ_i of the EM map M) is estimated
//! from forced EM steps, and
//!
//! ```text
//! V_obs = V_com (I − M₁)⁻¹,   ΔV = V_com M₁ (I − M₁)⁻¹ = V_obs − V_com.
//! ```
//!
//! Parameters follow [`ParamLayout`]: with full support this is the usual
//! k²−k layout; structural zeros drop out of the parametrisation.

use nalgebra::DMatrix;

use crate::em::{EmResult, FilteredData};
use crate::error::{Error, Result};
use crate::matrix::{CountMatrix, ParamLayout, TransitionMatrix};

/// Block-diagonal expected complete-data information at `p`.
///
/// Block i has entries E_ij/p_ij² + E_ir/p_ir² on the diagonal and E_ir/p_ir²
/// off it, where r is row i's reference column.
pub fn complete_info(e: &CountMatrix, p: &TransitionMatrix, layout: &ParamLayout) -> Result<DMatrix<f64>> {
    let d = layout.dim();
    let mut info = DMatrix::zeros(d, d);
    for row in 0..layout.k() {
        let r = layout.reference_column(row);
        let p_ref = p.get(row, r);
        let idx: Vec<usize> = layout.row_indices(row).collect();
        if p_ref <= 0.0 || idx.iter().any(|&a| p.get(row, layout.coords()[a].1) <= 0.0) {
            return Err(Error::SingularBlock { row: row + 1 });
        }
        let shared = e.get(row, r) / (p_ref * p_ref);
        for &a in &idx {
            for &b in &idx {
                info[(a, b)] = shared;
            }
            let j = layout.coords()[a].1;
            let pj = p.get(row, j);
            info[(a, a)] += e.get(row, j) / (pj * pj);
        }
    }
    Ok(info)
}

/// Inverts the complete-data information one row block at a time.
pub fn v_com(i_com: &DMatrix<f64>, layout: &ParamLayout) -> Result<DMatrix<f64>> {
    let d = layout.dim();
    let mut out = DMatrix::zeros(d, d);
    for row in 0..layout.k() {
        let idx: Vec<usize> = layout.row_indices(row).collect();
        if idx.is_empty() {
            continue;
        }
        let block = i_com.select_rows(&idx).select_columns(&idx);
        let inv = block.cholesky().ok_or(Error::SingularBlock { row: row + 1 })?.inverse();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                out[(ia, ib)] = 0.5 * (inv[(a, b)] + inv[(b, a)]);
            }
        }
    }
    Ok(out)
}

/// V_obs = V_com (I − M₁)⁻¹ and ΔV = V_com M₁ (I − M₁)⁻¹.
pub fn v_obs(v_com: &DMatrix<f64>, m1: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = m1.nrows();
    let inv = (DMatrix::identity(d, d) - m1).try_inverse().ok_or(Error::SingularIMinusM1)?;
    let v = v_com * &inv;
    let dv = v_com * m1 * &inv;
    Ok((v, dv))
}

/// max |V − Vᵀ| over all entries.
pub fn symmetry_diagnostic(v: &DMatrix<f64>) -> f64 {
    (v - v.transpose()).amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemOptions {
    /// Successive rate estimates must agree to within this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SemOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 100_000 }
    }
}

/// Perturbations smaller than this carry no usable derivative information.
const MIN_PERTURBATION: f64 = 1e-10;

/// Rate matrix M₁ of the EM map at `theta_hat` from the forced-EM sequence
/// started at `theta_init` (free coordinates). Returns the matrix and which
/// rows converged; rows that fail to converge are an error.
pub fn sem_m1(
    data: &FilteredData,
    theta_hat: &TransitionMatrix,
    theta_init: &[f64],
    opts: SemOptions,
) -> Result<(DMatrix<f64>, Vec<bool>)> {
    let support = data.support();
    let layout = ParamLayout::new(support);
    let d = layout.dim();
    let hat = layout.extract(theta_hat);
    if theta_init.len() != d {
        return Err(Error::InvalidInput(format!("expected {} starting values, got {}", d, theta_init.len())));
    }
    if theta_init.iter().zip(&hat).any(|(a, b)| a == b) {
        return Err(Error::InvalidInput("SEM start must differ from the estimate in every coordinate".into()));
    }

    // differencing against M(θ̂) rather than θ̂ cancels the EM stopping error
    let anchor = layout.extract(&data.em_update(theta_hat)?);
    let mut current = layout.assemble(theta_init, support)?;
    let mut rates = DMatrix::zeros(d, d);
    let mut previous: Vec<Option<Vec<f64>>> = vec![None; d];
    let mut last_step = vec![0.0; d];
    let mut done = vec![false; d];

    for _ in 0..opts.max_iter {
        if done.iter().all(|&c| c) {
            break;
        }
        let cur = layout.extract(&current);
        for i in 0..d {
            if done[i] {
                continue;
            }
            // once the sequence reaches θ̂ in this coordinate, keep shrinking the last step
            let stalled = (cur[i] - hat[i]).abs() < MIN_PERTURBATION && last_step[i] != 0.0;
            let target = if stalled { hat[i] + 0.5 * last_step[i] } else { cur[i] };
            let Some(value) = feasible_perturbation(&layout, &hat, i, target) else {
                continue;
            };
            let step = value - hat[i];
            if step.abs() < MIN_PERTURBATION {
                return Err(Error::RowNotConverged { param: i + 1 });
            }
            last_step[i] = step;
            let mut forced = hat.clone();
            forced[i] = value;
            let mapped = layout.extract(&data.em_update(&layout.assemble(&forced, support)?)?);
            let r: Vec<f64> = mapped.iter().zip(&anchor).map(|(m, a)| (m - a) / step).collect();
            if let Some(prev) = &previous[i] {
                let change = r.iter().zip(prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if change < opts.tol {
                    done[i] = true;
                    for (j, &v) in r.iter().enumerate() {
                        rates[(i, j)] = v;
                    }
                }
            }
            previous[i] = Some(r);
        }
        current = data.em_update(&current)?;
    }
    if let Some(i) = done.iter().position(|&c| !c) {
        return Err(Error::RowNotConverged { param: i + 1 });
    }
    Ok((rates, done))
}

/// θ̂ with coordinate i set to `value`, pulled back inside the parameter space
/// when needed: an infeasible value is replaced by the midpoint between θ̂_i
/// and the violated bound. `None` when no perturbation is possible.
fn feasible_perturbation(layout: &ParamLayout, hat: &[f64], i: usize, value: f64) -> Option<f64> {
    if value == hat[i] {
        return None;
    }
    let row = layout.coords()[i].0;
    let upper = hat[i] + layout.reference_prob(hat, row);
    if value >= upper {
        Some(0.5 * (hat[i] + upper))
    } else if value <= 0.0 {
        Some(0.5 * hat[i])
    } else {
        Some(value)
    }
}

/// Where the forced-EM sequence starts.
#[derive(Debug, Clone, PartialEq)]
pub enum SemStart {
    /// θ̂ moved by two complete-data standard deviations per coordinate,
    /// shrunk towards θ̂ until it is strictly inside the parameter space.
    TwoSd,
    /// The EM iterate after this many updates from the uniform start.
    EarlyIterate(usize),
    /// Explicit free coordinates.
    Given(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SemResult {
    pub layout: ParamLayout,
    pub theta_hat: Vec<f64>,
    pub m1: DMatrix<f64>,
    pub i_com: DMatrix<f64>,
    pub v_com: DMatrix<f64>,
    /// Symmetrised (V + Vᵀ)/2; the raw asymmetry is kept in `asymmetry`.
    pub v_obs: DMatrix<f64>,
    pub delta_v: DMatrix<f64>,
    pub asymmetry: f64,
    pub converged_rows: Vec<bool>,
}

impl SemResult {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.v_obs.nrows()).map(|i| self.v_obs[(i, i)].max(0.0).sqrt()).collect()
    }
}

fn two_sd_start(layout: &ParamLayout, hat: &[f64], v_com: &DMatrix<f64>) -> Vec<f64> {
    let shift: Vec<f64> = (0..hat.len()).map(|i| 2.0 * v_com[(i, i)].sqrt()).collect();
    let mut scale = 1.0;
    loop {
        let cand: Vec<f64> = hat.iter().zip(&shift).map(|(h, s)| h + scale * s).collect();
        if layout.is_interior(&cand) {
            return cand;
        }
        scale *= 0.5;
    }
}

/// Full SEM pass around a converged EM result.
pub fn run_sem(data: &FilteredData, em: &EmResult, start: SemStart, opts: SemOptions) -> Result<SemResult> {
    let layout = ParamLayout::new(data.support());
    let hat = layout.extract(&em.estimate);
    let i_com = complete_info(&em.expected_counts, &em.estimate, &layout)?;
    let v_com_m = v_com(&i_com, &layout)?;
    let init = match start {
        SemStart::TwoSd => two_sd_start(&layout, &hat, &v_com_m),
        SemStart::EarlyIterate(steps) => {
            let mut p = TransitionMatrix::uniform(data.support())?;
            for _ in 0..steps {
                p = data.em_update(&p)?;
            }
            layout.extract(&p)
        }
        SemStart::Given(v) => v,
    };
    let (m1, converged_rows) = sem_m1(data, &em.estimate, &init, opts)?;
    let (raw_v, raw_dv) = v_obs(&v_com_m, &m1)?;
    let asymmetry = symmetry_diagnostic(&raw_v);
    let v_obs_sym = (&raw_v + raw_v.transpose()) * 0.5;
    let delta_sym = (&raw_dv + raw_dv.transpose()) * 0.5;
    Ok(SemResult {
        layout,
        theta_hat: hat,
        m1,
        i_com,
        v_com: v_com_m,
        v_obs: v_obs_sym,
        delta_v: delta_sym,
        asymmetry,
        converged_rows,
    })
}
