//! Second-order expansion-matching priors: the drift field for log pi, the
//! curl existence check, path integration to a constant-free log prior, the
//! Jeffreys comparison and the hybrid matching-equation residuals.

use crate::error::{EngineError, Result};
use crate::expansion_engine::PriorDerivatives;
use crate::gauss_moments::{psi_vector, sigma_diag, CovarianceMatrix, LossExponents};
use crate::index_algebra::{multi_indices_of_norm, MultiIndex};
use crate::model_kit::{expectation_of_deriv, fisher_information, Model};
use crate::numerics::{adaptive_simpson, fd_step};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub const DEFAULT_CURL_TOL: f64 = 1e-4;
const LEG_TOL: f64 = 1e-10;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for r in 0..n {
        for c in 0..n {
            out[(r, c)] = 0.5 * (m[(r, c)] + m[(c, r)]);
        }
    }
    out
}

/// The required gradient of log pi for second-order matching: at theta,
/// b(theta) = -{sigma(a)}^{-1} sum_{|i|=3} (E_i(theta)/i!) Psi_i with the
/// Gaussian moments taken under N(0, I^{-1}(theta)).
pub struct DriftField<'a> {
    model: &'a dyn Model,
    loss: LossExponents,
}

pub fn drift_field(model: &dyn Model, loss: LossExponents) -> Result<DriftField<'_>> {
    if loss.dim() != model.space().d() {
        return Err(EngineError::DimensionMismatch {
            expected: model.space().d(),
            got: loss.dim(),
        });
    }
    Ok(DriftField { model, loss })
}

impl DriftField<'_> {
    pub fn d(&self) -> usize {
        self.model.space().d()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let d = self.d();
        let fisher = fisher_information(self.model, theta)?;
        let cov = CovarianceMatrix::new(symmetrize(&fisher.i_inv))?;
        let sd = sigma_diag(&self.loss, &cov)?;
        let mut raw: DVector<f64> = DVector::zeros(d);
        for i in multi_indices_of_norm(d, 3) {
            let e_i = expectation_of_deriv(self.model, theta, &i)?;
            if e_i == 0.0 {
                continue;
            }
            let psi = DVector::from_vec(psi_vector(&i, &self.loss, &cov)?);
            raw += psi * (e_i / i.factorial_f64());
        }
        Ok(DVector::from_iterator(d, (0..d).map(|k| -raw[k] / sd[(k, k)])))
    }
}

#[derive(Debug, Clone)]
pub struct CurlReport {
    pub symmetric: bool,
    pub max_violation: f64,
    pub tol: f64,
}

/// Central-difference Jacobian of the field at each grid point; the maximal
/// asymmetry |J_ij - J_ji| decides existence of the matching prior.
pub fn curl_check<F>(b: &F, grid: &[Vec<f64>], tol: f64) -> Result<CurlReport>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let mut max_violation = 0.0_f64;
    for theta in grid {
        let d = theta.len();
        if d < 2 {
            continue;
        }
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let h = fd_step(theta[j], 1);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let bp = b(&tp)?;
            let bm = b(&tm)?;
            for i in 0..d {
                jac[(i, j)] = (bp[i] - bm[i]) / (2.0 * h);
            }
        }
        for i in 0..d {
            for j in (i + 1)..d {
                max_violation = max_violation.max((jac[(i, j)] - jac[(j, i)]).abs());
            }
        }
    }
    Ok(CurlReport {
        symmetric: max_violation < tol,
        max_violation,
        tol,
    })
}

/// Line integral of the field along the axis-parallel polyline visiting the
/// coordinates in the given order; returns log pi(theta) - log pi(theta*).
pub fn integrate_log_prior_ordered<F>(
    b: &F,
    theta_star: &[f64],
    theta: &[f64],
    order: &[usize],
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let d = theta_star.len();
    if theta.len() != d || order.len() != d {
        return Err(EngineError::DimensionMismatch {
            expected: d,
            got: if theta.len() != d { theta.len() } else { order.len() },
        });
    }
    let mut current: Vec<f64> = theta_star.to_vec();
    let mut total = 0.0;
    for &k in order {
        let (lo, hi) = (current[k], theta[k]);
        if lo != hi {
            let leg = |t: f64| -> f64 {
                let mut point = current.clone();
                point[k] = t;
                match b(&point) {
                    Ok(v) => v[k],
                    Err(_) => f64::NAN,
                }
            };
            total += adaptive_simpson(&leg, lo, hi, LEG_TOL)?;
        }
        current[k] = theta[k];
    }
    if !total.is_finite() {
        return Err(EngineError::QuadratureFailure(
            "drift field evaluation failed along the integration path".into(),
        ));
    }
    Ok(total)
}

/// Axis-ordered path: coordinate 1 first, then 2, and so on.
pub fn integrate_log_prior<F>(b: &F, theta_star: &[f64], theta: &[f64]) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let order: Vec<usize> = (0..theta_star.len()).collect();
    integrate_log_prior_ordered(b, theta_star, theta, &order)
}

/// A constant-free matching prior anchored at a reference point; built only
/// after the curl check passes on the supplied grid.
pub struct PriorSolution<'a> {
    pub reference_point: Vec<f64>,
    pub curl_report: CurlReport,
    field: &'a DriftField<'a>,
}

pub fn solve_prior<'a>(
    field: &'a DriftField<'a>,
    reference_point: Vec<f64>,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<PriorSolution<'a>> {
    let report = curl_check(&|t: &[f64]| field.eval(t), grid, tol)?;
    if !report.symmetric {
        return Err(EngineError::Invalid(format!(
            "drift field is not a gradient: curl violation {:.3e} exceeds {:.3e}",
            report.max_violation, report.tol
        )));
    }
    Ok(PriorSolution {
        reference_point,
        curl_report: report,
        field,
    })
}

impl PriorSolution<'_> {
    pub fn logpi(&self, theta: &[f64]) -> Result<f64> {
        integrate_log_prior(&|t: &[f64]| self.field.eval(t), &self.reference_point, theta)
    }
}

/// (1/2) log det I(theta), constant-free.
pub fn jeffreys_log_prior(model: &dyn Model, theta: &[f64]) -> Result<f64> {
    let fisher = fisher_information(model, theta)?;
    let chol = symmetrize(&fisher.i_mat)
        .cholesky()
        .ok_or_else(|| EngineError::NotPositiveDefinite {
            context: "Fisher information".into(),
        })?;
    let mut logdet = 0.0;
    for k in 0..fisher.d() {
        logdet += chol.l()[(k, k)].ln();
    }
    Ok(logdet)
}

#[derive(Debug, Clone)]
pub struct PremiseReport {
    pub holds: bool,
    pub max_rel_gap: f64,
    /// lhs/rhs at the grid point with the largest relative gap.
    pub worst_ratio: f64,
    /// When the premise holds: max |matching - Jeffreys| over the grid,
    /// both anchored at the first grid point.
    pub jeffreys_gap: Option<f64>,
}

/// Checks the shortcut identity E l_{3 e_j} = -dI_jj/dtheta_j on the grid
/// (valid for independent diagonal families when expectation and
/// differentiation commute suitably); when it holds, also confirms the
/// matching prior coincides with Jeffreys on the grid.
pub fn example1_premise_check(
    model: &dyn Model,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<PremiseReport> {
    let d = model.space().d();
    let mut max_rel_gap = 0.0_f64;
    let mut worst_ratio = 1.0_f64;
    for theta in grid {
        for j in 0..d {
            let lhs = expectation_of_deriv(model, theta, &MultiIndex::unit(d, j).scale(3))?;
            let h = fd_step(theta[j], 1);
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let ip = fisher_information(model, &tp)?.i_mat[(j, j)];
            let im = fisher_information(model, &tm)?.i_mat[(j, j)];
            let rhs = -(ip - im) / (2.0 * h);
            let gap = (lhs - rhs).abs() / rhs.abs().max(1e-8);
            if gap > max_rel_gap {
                max_rel_gap = gap;
                worst_ratio = if rhs.abs() > 1e-12 { lhs / rhs } else { 1.0 };
            }
        }
    }
    let holds = max_rel_gap < tol;
    let jeffreys_gap = if holds && !grid.is_empty() {
        let field = drift_field(model, LossExponents::squared(d))?;
        let reference = &grid[0];
        let j_ref = jeffreys_log_prior(model, reference)?;
        let mut gap = 0.0_f64;
        for theta in grid {
            let matching = integrate_log_prior(&|t: &[f64]| field.eval(t), reference, theta)?;
            let jeffreys = jeffreys_log_prior(model, theta)? - j_ref;
            gap = gap.max((matching - jeffreys).abs());
        }
        Some(gap)
    } else {
        None
    };
    Ok(PremiseReport {
        holds,
        max_rel_gap,
        worst_ratio,
        jeffreys_gap,
    })
}

/// Residuals of the hybrid matching system at theta = (alpha, beta1) for
/// the supplied prior gradient on the alpha block: the first vector is
/// d log pi / d alpha + {sigma(a_1)}^{-1} sum_{|i|=3} E_i^1 Psi_i^1 / i!,
/// the second is I^21 d log pi / d alpha.
pub fn hybrid_matching_residual(
    model: &dyn Model,
    prior_alpha: &PriorDerivatives,
    theta: &[f64],
    loss_alpha: &LossExponents,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let fisher = fisher_information(model, theta)?;
    let d = fisher.d();
    let d1 = fisher.d1;
    if d1 == 0 {
        return Err(EngineError::Invalid(
            "hybrid matching needs a nonempty alpha block".into(),
        ));
    }
    if prior_alpha.d() != d1 || loss_alpha.dim() != d1 {
        return Err(EngineError::DimensionMismatch {
            expected: d1,
            got: if prior_alpha.d() != d1 {
                prior_alpha.d()
            } else {
                loss_alpha.dim()
            },
        });
    }
    let i11 = fisher.inv_block(1, 1);
    let cov = CovarianceMatrix::new(symmetrize(&i11))?;
    let sd = sigma_diag(loss_alpha, &cov)?;
    let mut raw: DVector<f64> = DVector::zeros(d1);
    for i in multi_indices_of_norm(d1, 3) {
        let mut idx = vec![0usize; d];
        idx[..d1].copy_from_slice(&i.0);
        let e_i = expectation_of_deriv(model, theta, &MultiIndex::new(idx))?;
        if e_i == 0.0 {
            continue;
        }
        let psi = DVector::from_vec(psi_vector(&i, loss_alpha, &cov)?);
        raw += psi * (e_i / i.factorial_f64());
    }
    let rho0 = prior_alpha.rho0();
    let r1 = DVector::from_iterator(d1, (0..d1).map(|k| rho0[k] + raw[k] / sd[(k, k)]));
    let r2 = if d1 < d {
        fisher.inv_block(2, 1) * &rho0
    } else {
        DVector::zeros(0)
    };
    Ok((r1, r2))
}

/// CSV rows (theta_1, ..., theta_d, logpi) for a grid; evaluation order is
/// the grid order regardless of thread count.
pub fn prior_grid_csv<F>(logpi: F, grid: &[Vec<f64>], names: &[String]) -> Result<String>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let values: Vec<Result<f64>> = grid.par_iter().map(|theta| logpi(theta)).collect();
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push_str(",logpi\n");
    for (theta, value) in grid.iter().zip(values) {
        let v = value?;
        for c in theta {
            out.push_str(&format!("{c},"));
        }
        out.push_str(&format!("{v}\n"));
    }
    Ok(out)
}
