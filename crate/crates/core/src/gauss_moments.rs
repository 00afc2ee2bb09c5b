//! Joint moments of centered multivariate Gaussians via Wick pairings, and
//! the loss-weighted moment vectors used by the Bayes correction terms and
//! the matching-prior drift.

use crate::error::{EngineError, Result};
use crate::index_algebra::MultiIndex;
use nalgebra::DMatrix;

const MAX_MOMENT_ORDER: usize = 8;

/// Real symmetric positive semidefinite d x d matrix.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(EngineError::Invalid("covariance must be square".into()));
        }
        let norm = entries.norm();
        let scale = if norm > 0.0 { norm } else { 1.0 };
        for r in 0..entries.nrows() {
            for c in 0..r {
                if (entries[(r, c)] - entries[(c, r)]).abs() > 1e-12 * scale {
                    return Err(EngineError::Invalid(format!(
                        "covariance asymmetric at ({r},{c})"
                    )));
                }
            }
        }
        let eig = entries.clone().symmetric_eigenvalues();
        if eig.iter().any(|&l| l < -1e-10 * scale) {
            return Err(EngineError::NotPositiveDefinite {
                context: "covariance has negative eigenvalue".into(),
            });
        }
        Ok(CovarianceMatrix { entries })
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            diag,
        )))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Loss exponent vector a: every entry an even integer >= 2.
#[derive(Debug, Clone)]
pub struct LossExponents(Vec<usize>);

impl LossExponents {
    pub fn new(a: Vec<usize>) -> Result<Self> {
        if a.iter().any(|&e| e < 2 || e % 2 != 0) {
            return Err(EngineError::Invalid(
                "loss exponents must be even integers >= 2".into(),
            ));
        }
        Ok(LossExponents(a))
    }

    /// Squared error loss, a = 2*1.
    pub fn squared(d: usize) -> Self {
        LossExponents(vec![2; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }
}

/// sigma(a) = E<theta^a> for theta ~ N(0, Sigma), by summation over all
/// perfect pairings of the expanded symbol list. Exactly 0 for odd |a|.
pub fn gaussian_moment(a: &MultiIndex, sigma: &CovarianceMatrix) -> Result<f64> {
    if a.dim() != sigma.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: sigma.dim(),
            got: a.dim(),
        });
    }
    let order = a.norm();
    if order > MAX_MOMENT_ORDER {
        return Err(EngineError::OrderTooLarge {
            order,
            bound: MAX_MOMENT_ORDER,
        });
    }
    if order % 2 != 0 {
        return Ok(0.0);
    }
    if order == 0 {
        return Ok(1.0);
    }
    // Expand: coordinate k appears a_k times.
    let mut symbols = Vec::with_capacity(order);
    for (k, &e) in a.0.iter().enumerate() {
        for _ in 0..e {
            symbols.push(k);
        }
    }
    let mut used = vec![false; symbols.len()];
    Ok(pairings_sum(&symbols, &mut used, sigma.matrix()))
}

fn pairings_sum(symbols: &[usize], used: &mut [bool], sigma: &DMatrix<f64>) -> f64 {
    let first = match used.iter().position(|&u| !u) {
        Some(p) => p,
        None => return 1.0,
    };
    used[first] = true;
    let mut total = 0.0;
    for j in first + 1..symbols.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        total += sigma[(symbols[first], symbols[j])] * pairings_sum(symbols, used, sigma);
        used[j] = false;
    }
    used[first] = false;
    total
}

fn double_factorial(n: usize) -> f64 {
    let mut acc = 1.0;
    let mut k = n as i64;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// {sigma(a)} = diag(sigma(a_1), ..., sigma(a_d)): the a_r-th marginal moment
/// of theta_r under N(0, Sigma), i.e. (a_r - 1)!! * Sigma_rr^{a_r/2}.
pub fn sigma_diag(a: &LossExponents, sigma: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    if a.dim() != sigma.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: sigma.dim(),
            got: a.dim(),
        });
    }
    let d = a.dim();
    let mut out = DMatrix::zeros(d, d);
    for r in 0..d {
        let ar = a.entries()[r];
        out[(r, r)] = double_factorial(ar - 1) * sigma.matrix()[(r, r)].powi(ar as i32 / 2);
    }
    Ok(out)
}

/// Psi_i = E(theta^{a-1} <theta^i>) with theta ~ N(0, Sigma): component k is
/// the Gaussian moment of index (a_k - 1) e_k + i.
pub fn psi_vector(
    i: &MultiIndex,
    a: &LossExponents,
    sigma: &CovarianceMatrix,
) -> Result<Vec<f64>> {
    let d = sigma.dim();
    if i.dim() != d || a.dim() != d {
        return Err(EngineError::DimensionMismatch {
            expected: d,
            got: i.dim(),
        });
    }
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let mut idx = i.clone();
        idx.0[k] += a.entries()[k] - 1;
        out.push(gaussian_moment(&idx, sigma)?);
    }
    Ok(out)
}
