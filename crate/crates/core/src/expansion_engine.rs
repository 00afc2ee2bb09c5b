//! First three asymptotic expansion terms for the four estimator kinds (MLE,
//! maximum posterior, Bayes, hybrid), including the Bayes loss corrections
//! Q1, Q2 and the hybrid mixed terms.

use crate::error::{EngineError, Result};
use crate::gauss_moments::{psi_vector, sigma_diag, CovarianceMatrix, LossExponents};
use crate::index_algebra::{
    enumerate_rsli, hadamard_power_product, multi_indices_of_norm, MultiIndex,
};
use crate::model_kit::EmpiricalStats;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Derivatives of the log-prior gradient: `rho[i]` holds the i-th partial
/// derivative of grad log pi, for |i| <= 1.
#[derive(Debug, Clone)]
pub struct PriorDerivatives {
    d: usize,
    rho: BTreeMap<MultiIndex, DVector<f64>>,
}

impl PriorDerivatives {
    pub fn new(d: usize, rho: BTreeMap<MultiIndex, DVector<f64>>) -> Result<Self> {
        for (i, v) in &rho {
            if i.dim() != d || v.len() != d {
                return Err(EngineError::DimensionMismatch {
                    expected: d,
                    got: if i.dim() != d { i.dim() } else { v.len() },
                });
            }
            if i.norm() > 1 {
                return Err(EngineError::OrderTooLarge {
                    order: i.norm(),
                    bound: 1,
                });
            }
        }
        Ok(PriorDerivatives { d, rho })
    }

    /// Constant prior: gradient and all its derivatives vanish.
    pub fn flat(d: usize) -> Self {
        PriorDerivatives {
            d,
            rho: BTreeMap::new(),
        }
    }

    /// Independent Gaussian prior N(mu1_k, 1/lambda_k) per coordinate,
    /// differentiated at theta0.
    pub fn gaussian(theta0: &[f64], mu1: &[f64], precisions: &[f64]) -> Self {
        let d = theta0.len();
        let mut rho = BTreeMap::new();
        let grad = DVector::from_iterator(
            d,
            (0..d).map(|k| -precisions[k] * (theta0[k] - mu1[k])),
        );
        rho.insert(MultiIndex::zeros(d), grad);
        for j in 0..d {
            let mut v = DVector::zeros(d);
            v[j] = -precisions[j];
            rho.insert(MultiIndex::unit(d, j), v);
        }
        PriorDerivatives { d, rho }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: &MultiIndex) -> Option<&DVector<f64>> {
        self.rho.get(i)
    }

    pub fn rho0(&self) -> DVector<f64> {
        self.rho
            .get(&MultiIndex::zeros(self.d))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.d))
    }

    /// Embed a d1-dimensional prior (on the alpha block) into dimension d:
    /// indices padded with zeros, vectors padded with zeros on the beta block.
    pub fn embed(&self, d: usize) -> PriorDerivatives {
        let d1 = self.d;
        let mut rho = BTreeMap::new();
        for (i, v) in &self.rho {
            let mut idx = vec![0usize; d];
            idx[..d1].copy_from_slice(&i.0);
            let mut vec = DVector::zeros(d);
            for k in 0..d1 {
                vec[k] = v[k];
            }
            rho.insert(MultiIndex::new(idx), vec);
        }
        PriorDerivatives { d, rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionKind {
    Mle,
    Map,
    Bayes,
    Hybrid,
}

/// The first three expansion term vectors for one estimator kind, plus the
/// Bayes loss corrections when applicable.
#[derive(Debug, Clone)]
pub struct ExpansionTerms {
    pub kind: ExpansionKind,
    /// terms[r] is the order-r vector, r in {0, 1, 2}.
    pub terms: Vec<DVector<f64>>,
    pub q1: Option<DVector<f64>>,
    pub q2: Option<DVector<f64>>,
}

impl ExpansionTerms {
    pub fn term(&self, r: usize) -> &DVector<f64> {
        &self.terms[r]
    }
}

/// Sum over |l| = s of all order assignments of i with total order l, each
/// contributing the product of Hadamard powers of the lower-order terms.
fn assignment_weight(s: usize, i: &MultiIndex, h: &[DVector<f64>]) -> Result<f64> {
    let d = i.dim();
    let mut total = 0.0;
    for l in multi_indices_of_norm(d, s) {
        for assign in enumerate_rsli(0, s, &l, i) {
            let mut prod = 1.0;
            for v in 0..=s {
                let iv = assign.term(v);
                if iv.is_zero() {
                    continue;
                }
                prod *= hadamard_power_product(h[v].as_slice(), iv)? / iv.factorial_f64();
            }
            total += prod;
        }
    }
    Ok(total)
}

/// The shared order recursion: with no prior this is the MLE expansion, with
/// one it is the maximum-posterior expansion. `override_lower` replaces the
/// lower-order terms used inside the top-order sum (hybrid substitution).
fn h_recursion(
    stats: &EmpiricalStats,
    prior: Option<&PriorDerivatives>,
    override_lower: Option<&[DVector<f64>]>,
) -> Result<Vec<DVector<f64>>> {
    let d = stats.d();
    let i_inv = &stats.fisher.i_inv;
    let mut h: Vec<DVector<f64>> = vec![i_inv * stats.delta0()];
    if let Some(lower) = override_lower {
        h = lower.to_vec();
    }
    for r in h.len()..=2 {
        let mut acc: DVector<f64> = DVector::zeros(d);
        for s in 0..=r {
            let t = r - s;
            if t >= 1 {
                if let Some(prior) = prior {
                    for i in multi_indices_of_norm(d, t - 1) {
                        if let Some(rv) = prior.get(&i) {
                            let w = assignment_weight(s, &i, &h)?;
                            if w != 0.0 {
                                acc += rv * w;
                            }
                        }
                    }
                }
            }
            for i in multi_indices_of_norm(d, t) {
                let w = assignment_weight(s, &i, &h)?;
                if w != 0.0 {
                    acc += &stats.delta[&i] * w;
                }
            }
            if t > 0 {
                for i in multi_indices_of_norm(d, t + 1) {
                    let w = assignment_weight(s, &i, &h)?;
                    if w != 0.0 {
                        acc += &stats.expectations[&i] * w;
                    }
                }
            }
        }
        h.push(i_inv * acc);
    }
    Ok(h)
}

fn require_order(stats: &EmpiricalStats) -> Result<()> {
    if stats.max_order < 3 {
        return Err(EngineError::OrderTooLarge {
            order: stats.max_order,
            bound: 3,
        });
    }
    Ok(())
}

/// First three MLE expansion terms.
pub fn mle_terms(stats: &EmpiricalStats) -> Result<ExpansionTerms> {
    require_order(stats)?;
    Ok(ExpansionTerms {
        kind: ExpansionKind::Mle,
        terms: h_recursion(stats, None, None)?,
        q1: None,
        q2: None,
    })
}

/// First three maximum-posterior expansion terms.
pub fn map_terms(stats: &EmpiricalStats, prior: &PriorDerivatives) -> Result<ExpansionTerms> {
    require_order(stats)?;
    if prior.d() != stats.d() {
        return Err(EngineError::DimensionMismatch {
            expected: stats.d(),
            got: prior.d(),
        });
    }
    Ok(ExpansionTerms {
        kind: ExpansionKind::Map,
        terms: h_recursion(stats, Some(prior), None)?,
        q1: None,
        q2: None,
    })
}

fn symmetrized_cov(i_inv_like: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let dq = i_inv_like.nrows();
    let mut sym = i_inv_like.clone();
    for r in 0..dq {
        for c in 0..dq {
            sym[(r, c)] = 0.5 * (i_inv_like[(r, c)] + i_inv_like[(c, r)]);
        }
    }
    CovarianceMatrix::new(sym)
}

/// The deterministic first-order loss correction M_{0,1} for a Bayes block:
/// the inverse-information image of the loss-moment-scaled sum of
/// third-order derivative expectations. `i_inv_like` plays the role of the
/// inverse information and `escalar` must cover all indices of order 3.
pub fn m01_correction(
    i_inv_like: &DMatrix<f64>,
    loss: &LossExponents,
    escalar: &BTreeMap<MultiIndex, f64>,
) -> Result<DVector<f64>> {
    let dq = loss.dim();
    if i_inv_like.nrows() != dq || i_inv_like.ncols() != dq {
        return Err(EngineError::DimensionMismatch {
            expected: dq,
            got: i_inv_like.nrows(),
        });
    }
    let cov = symmetrized_cov(i_inv_like)?;
    let sd = sigma_diag(loss, &cov)?;
    let mut raw: DVector<f64> = DVector::zeros(dq);
    for i in multi_indices_of_norm(dq, 3) {
        let psi = DVector::from_vec(psi_vector(&i, loss, &cov)?);
        let e_i = escalar.get(&i).copied().ok_or_else(|| {
            EngineError::Invalid(format!("missing scalar statistic for index {i}"))
        })?;
        raw += &psi * (e_i / i.factorial_f64());
    }
    let scaled = DVector::from_iterator(dq, (0..dq).map(|k| raw[k] / sd[(k, k)]));
    Ok(i_inv_like * scaled)
}

/// The loss corrections (Q1, Q2) for a Bayes block of dimension dq.
/// `i_inv_like` plays the role of the inverse information, `gd0` the role of
/// the normalized score image (inverse information times score).
#[allow(clippy::too_many_arguments)]
fn q_corrections(
    i_inv_like: &DMatrix<f64>,
    a: &LossExponents,
    escalar: &BTreeMap<MultiIndex, f64>,
    delta_scalar: &BTreeMap<MultiIndex, f64>,
    gd0: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dq = a.dim();
    let cov = symmetrized_cov(i_inv_like)?;
    let sd = sigma_diag(a, &cov)?;
    let apply = |v: &DVector<f64>| -> DVector<f64> {
        let scaled = DVector::from_iterator(dq, (0..dq).map(|k| v[k] / sd[(k, k)]));
        i_inv_like * scaled
    };
    let lookup = |map: &BTreeMap<MultiIndex, f64>, i: &MultiIndex| -> Result<f64> {
        map.get(i).copied().ok_or_else(|| {
            EngineError::Invalid(format!("missing scalar statistic for index {i}"))
        })
    };

    let mut m02_raw: DVector<f64> = DVector::zeros(dq);
    for i in multi_indices_of_norm(dq, 3) {
        let psi = DVector::from_vec(psi_vector(&i, a, &cov)?);
        let mut inner = lookup(delta_scalar, &i)?;
        for j in 0..dq {
            let ij = i.add(&MultiIndex::unit(dq, j));
            inner += lookup(escalar, &ij)? * gd0[j];
        }
        m02_raw += &psi * (inner / i.factorial_f64());
    }
    let q1 = m01_correction(i_inv_like, a, escalar)?;
    let m02 = apply(&m02_raw);

    let mut q2 = m02;
    for (k, i) in (0..dq).map(|k| (k, MultiIndex::unit(dq, k))) {
        let psi = DVector::from_vec(psi_vector(&i, a, &cov)?);
        let mut coeff = 0.0;
        for j in multi_indices_of_norm(dq, 3) {
            if !j.dominates(&i) {
                continue;
            }
            let ji = j.sub(&i)?;
            let mut inner = lookup(delta_scalar, &ji)?;
            for l in 0..dq {
                let jil = ji.add(&MultiIndex::unit(dq, l));
                inner += lookup(escalar, &jil)? * gd0[l];
            }
            coeff += inner / ji.factorial_f64();
        }
        let m_i1 = apply(&(&psi * coeff));
        q2 += m_i1 * q1[k];
    }
    Ok((q1, q2))
}

/// First three Bayes expansion terms under an even power loss; Q1, Q2 are
/// exposed on the result.
pub fn bayes_terms(
    stats: &EmpiricalStats,
    prior: &PriorDerivatives,
    loss: &LossExponents,
) -> Result<ExpansionTerms> {
    require_order(stats)?;
    let d = stats.d();
    if loss.dim() != d || prior.d() != d {
        return Err(EngineError::DimensionMismatch {
            expected: d,
            got: if loss.dim() != d { loss.dim() } else { prior.d() },
        });
    }
    let h = h_recursion(stats, Some(prior), None)?;
    let gd0 = &h[0];
    let (q1, q2) = q_corrections(
        &stats.fisher.i_inv,
        loss,
        &stats.escalar,
        &stats.delta_scalar,
        gd0,
    )?;
    let terms = vec![h[0].clone(), &h[1] + &q1, &h[2] + &q2];
    Ok(ExpansionTerms {
        kind: ExpansionKind::Bayes,
        terms,
        q1: Some(q1),
        q2: Some(q2),
    })
}

fn embed_alpha_index(i: &MultiIndex, d: usize) -> MultiIndex {
    let mut idx = vec![0usize; d];
    idx[..i.dim()].copy_from_slice(&i.0);
    MultiIndex::new(idx)
}

fn pad_alpha(v: &DVector<f64>, d: usize) -> DVector<f64> {
    let mut out = DVector::zeros(d);
    for k in 0..v.len() {
        out[k] = v[k];
    }
    out
}

/// First three hybrid expansion terms: Bayes corrections on the alpha block
/// (the first d1 coordinates), MLE behavior on the beta block.
pub fn hybrid_terms(
    stats: &EmpiricalStats,
    prior_alpha: &PriorDerivatives,
    loss_alpha: &LossExponents,
) -> Result<ExpansionTerms> {
    require_order(stats)?;
    let d = stats.d();
    let d1 = stats.fisher.d1;
    if d1 == 0 || d1 >= d {
        return Err(EngineError::Invalid(format!(
            "hybrid expansion needs 1 <= d1 < d, got d1 = {d1}, d = {d}"
        )));
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

    let i_inv = &stats.fisher.i_inv;
    let i11 = stats.fisher.inv_block(1, 1);
    let mle = h_recursion(stats, None, None)?;

    // alpha-block scalar tables (indices restricted to the first d1 slots)
    let mut escalar1 = BTreeMap::new();
    let mut dscalar1 = BTreeMap::new();
    for norm in 1..=4 {
        for i in multi_indices_of_norm(d1, norm) {
            let full = embed_alpha_index(&i, d);
            if let Some(&v) = stats.escalar.get(&full) {
                escalar1.insert(i.clone(), v);
            }
            if let Some(&v) = stats.delta_scalar.get(&full) {
                dscalar1.insert(i, v);
            }
        }
    }
    let delta0_1 = DVector::from_iterator(d1, (0..d1).map(|k| stats.delta0()[k]));
    let gd0_1 = &i11 * &delta0_1;
    let (q1a, q2a) = q_corrections(&i11, loss_alpha, &escalar1, &dscalar1, &gd0_1)?;

    // order 1: MLE term plus (I^{.1} rho0^1) plus the alpha loss correction
    let prior_full = prior_alpha.embed(d);
    let rho0_pad = prior_full.rho0();
    let g1h1 = &mle[1] + i_inv * &rho0_pad + pad_alpha(&q1a, d);

    // order 2: the MLE recursion with orders 0 and 1 replaced by the hybrid
    // ones, plus the prior-gradient-derivative term and the alpha q2
    let lower = [mle[0].clone(), g1h1.clone()];
    let top = h_recursion(stats, None, Some(&lower))?;
    let mut rho_sum = DVector::zeros(d);
    for j in 0..d1 {
        if let Some(rv) = prior_full.get(&MultiIndex::unit(d, j)) {
            rho_sum += rv * mle[0][j];
        }
    }
    let g2h2 = &top[2] + i_inv * rho_sum + pad_alpha(&q2a, d);

    Ok(ExpansionTerms {
        kind: ExpansionKind::Hybrid,
        terms: vec![mle[0].clone(), g1h1, g2h2],
        q1: Some(pad_alpha(&q1a, d)),
        q2: Some(pad_alpha(&q2a, d)),
    })
}
