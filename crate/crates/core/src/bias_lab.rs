//! Expected asymptotic bias (EAB): the mean of the weak limit of the
//! first-order expansion term, used to rank MLE, Bayes and hybrid estimators
//! by second-order behavior, with a limit-simulation cross-check.

use crate::error::{EngineError, Result};
use crate::expansion_engine::{m01_correction, PriorDerivatives};
use crate::gauss_moments::LossExponents;
use crate::index_algebra::{multi_indices_of_norm, MultiIndex};
use crate::model_kit::{
    expectation_of_deriv, fisher_information, product_expectation, Model,
};
use crate::numerics::derive_seed;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Two EAB vectors closer than this in norm are reported as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Agreement threshold for the limit-simulation oracle, in standard errors.
pub const ORACLE_Z_BOUND: f64 = 4.0;

const ORACLE_CHUNKS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormKind {
    Euclidean,
    Max,
}

pub fn vector_norm(v: &DVector<f64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::Euclidean => v.norm(),
        NormKind::Max => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
    }
}

/// D_j: the matrix with (k, m) entry E[l_{e_j + e_k} l_{e_m}] at theta0.
pub fn d_matrix(model: &dyn Model, theta0: &[f64], j: usize) -> Result<DMatrix<f64>> {
    let d = model.space().d();
    if j >= d {
        return Err(EngineError::Invalid(format!(
            "coordinate index {j} out of range for dimension {d}"
        )));
    }
    let ej = MultiIndex::unit(d, j);
    let mut out = DMatrix::zeros(d, d);
    for k in 0..d {
        let row = ej.add(&MultiIndex::unit(d, k));
        for m in 0..d {
            out[(k, m)] = product_expectation(model, theta0, &row, &MultiIndex::unit(d, m))?;
        }
    }
    Ok(out)
}

/// V: the covariance of the score, entry (k, m) = E[l_{e_k} l_{e_m}].
pub fn score_covariance(model: &dyn Model, theta0: &[f64]) -> Result<DMatrix<f64>> {
    let d = model.space().d();
    let mut v = DMatrix::zeros(d, d);
    for k in 0..d {
        for m in k..d {
            let val = product_expectation(
                model,
                theta0,
                &MultiIndex::unit(d, k),
                &MultiIndex::unit(d, m),
            )?;
            v[(k, m)] = val;
            v[(m, k)] = val;
        }
    }
    Ok(v)
}

/// E_i: the stack vector with k-th component E[l_{i + e_k}].
fn e_stack(model: &dyn Model, theta0: &[f64], i: &MultiIndex) -> Result<DVector<f64>> {
    let d = i.dim();
    let mut out = DVector::zeros(d);
    for k in 0..d {
        out[k] = expectation_of_deriv(model, theta0, &i.add(&MultiIndex::unit(d, k)))?;
    }
    Ok(out)
}

/// EAB of the MLE: I^{-1} (sum_j D_j I_j^{-1}
/// + sum_{j,k} E_{e_j+e_k} (I^{-1} V I^{-1})_{jk} / (e_j+e_k)!),
/// with I_j^{-1} the j-th column of I^{-1} and V the score covariance.
pub fn eab_mle(model: &dyn Model, theta0: &[f64]) -> Result<DVector<f64>> {
    let d = model.space().d();
    let fisher = fisher_information(model, theta0)?;
    let i_inv = &fisher.i_inv;
    let v = score_covariance(model, theta0)?;
    let w = i_inv * &v * i_inv;
    let mut inner: DVector<f64> = DVector::zeros(d);
    for j in 0..d {
        let dj = d_matrix(model, theta0, j)?;
        inner += dj * i_inv.column(j);
    }
    for a in 0..d {
        for b in 0..d {
            let i = MultiIndex::unit(d, a).add(&MultiIndex::unit(d, b));
            let e = e_stack(model, theta0, &i)?;
            inner += e * (w[(a, b)] / i.factorial_f64());
        }
    }
    Ok(i_inv * inner)
}

fn third_order_expectations(
    model: &dyn Model,
    theta0: &[f64],
) -> Result<BTreeMap<MultiIndex, f64>> {
    let d = model.space().d();
    let mut escalar = BTreeMap::new();
    for i in multi_indices_of_norm(d, 3) {
        escalar.insert(i.clone(), expectation_of_deriv(model, theta0, &i)?);
    }
    Ok(escalar)
}

/// EAB of the Bayes estimator: eab_mle + I^{-1} rho_0 + M_{0,1}.
pub fn eab_bayes(
    model: &dyn Model,
    theta0: &[f64],
    prior: &PriorDerivatives,
    loss: &LossExponents,
) -> Result<DVector<f64>> {
    let d = model.space().d();
    if prior.d() != d || loss.dim() != d {
        return Err(EngineError::DimensionMismatch {
            expected: d,
            got: if prior.d() != d { prior.d() } else { loss.dim() },
        });
    }
    let base = eab_mle(model, theta0)?;
    let fisher = fisher_information(model, theta0)?;
    let m01 = m01_correction(&fisher.i_inv, loss, &third_order_expectations(model, theta0)?)?;
    Ok(base + &fisher.i_inv * prior.rho0() + m01)
}

/// EAB of the hybrid estimator: eab_mle plus the alpha-block correction
/// (I^11 rho_0^1 + the alpha loss correction) and the beta-block image
/// I^21 rho_0^1.
pub fn eab_hybrid(
    model: &dyn Model,
    theta0: &[f64],
    prior_alpha: &PriorDerivatives,
    loss_alpha: &LossExponents,
) -> Result<DVector<f64>> {
    let d = model.space().d();
    let fisher = fisher_information(model, theta0)?;
    let d1 = fisher.d1;
    if d1 == 0 || d1 >= d {
        return Err(EngineError::Invalid(format!(
            "hybrid EAB needs 1 <= d1 < d, got d1 = {d1}, d = {d}"
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
    let base = eab_mle(model, theta0)?;
    let i11 = fisher.inv_block(1, 1);
    let i21 = fisher.inv_block(2, 1);
    let mut escalar1 = BTreeMap::new();
    for i in multi_indices_of_norm(d1, 3) {
        let mut idx = vec![0usize; d];
        idx[..d1].copy_from_slice(&i.0);
        escalar1.insert(
            i.clone(),
            expectation_of_deriv(model, theta0, &MultiIndex::new(idx))?,
        );
    }
    let m01a = m01_correction(&i11, loss_alpha, &escalar1)?;
    let rho01 = prior_alpha.rho0();
    let top = &i11 * &rho01 + m01a;
    let bottom = &i21 * &rho01;
    let mut out = base;
    for k in 0..d1 {
        out[k] += top[k];
    }
    for k in 0..(d - d1) {
        out[d1 + k] += bottom[k];
    }
    Ok(out)
}

/// Monte Carlo estimate of the EAB from the joint Gaussian limit of the
/// centered derivative sums.
#[derive(Debug, Clone, Serialize)]
pub struct OracleEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub draws: usize,
}

impl OracleEstimate {
    /// Largest componentwise discrepancy from `reference` in standard errors.
    pub fn max_z(&self, reference: &DVector<f64>) -> f64 {
        let mut z = 0.0_f64;
        for k in 0..reference.len() {
            let diff = (self.mean[k] - reference[k]).abs();
            z = z.max(diff / self.se[k].max(1e-12));
        }
        z
    }
}

fn psd_square_root(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = cov.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    let floor = -1e-8 * max_abs.max(1.0);
    let mut sqrt_vals = DVector::zeros(eig.eigenvalues.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return Err(EngineError::NotPositiveDefinite {
                context: "limit covariance of derivative sums".into(),
            });
        }
        sqrt_vals[k] = lambda.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

/// Simulates the first-order expansion term from the limit distribution:
/// draws the score and the centered order-2 derivative sums as a joint
/// Gaussian with model-computed covariance, then averages the term assembly.
/// Chunked with per-chunk derived seeds; the reduction order is fixed, so
/// the result does not depend on the thread count.
pub fn limit_simulation_oracle(
    model: &dyn Model,
    theta0: &[f64],
    draws: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    if draws == 0 {
        return Err(EngineError::Invalid("oracle needs at least one draw".into()));
    }
    let d = model.space().d();
    let fisher = fisher_information(model, theta0)?;
    let i_inv = fisher.i_inv.clone();

    let mut idxs: Vec<MultiIndex> = Vec::with_capacity(d + d * d);
    for k in 0..d {
        idxs.push(MultiIndex::unit(d, k));
    }
    for j in 0..d {
        for k in 0..d {
            idxs.push(MultiIndex::unit(d, j).add(&MultiIndex::unit(d, k)));
        }
    }
    let mut means = Vec::with_capacity(idxs.len());
    for i in &idxs {
        means.push(expectation_of_deriv(model, theta0, i)?);
    }
    let m = idxs.len();
    let mut cov = DMatrix::zeros(m, m);
    let mut cache: BTreeMap<(MultiIndex, MultiIndex), f64> = BTreeMap::new();
    for p in 0..m {
        for q in p..m {
            let key = if idxs[p] <= idxs[q] {
                (idxs[p].clone(), idxs[q].clone())
            } else {
                (idxs[q].clone(), idxs[p].clone())
            };
            let prod = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let v = product_expectation(model, theta0, &key.0, &key.1)?;
                    cache.insert(key, v);
                    v
                }
            };
            let c = prod - means[p] * means[q];
            cov[(p, q)] = c;
            cov[(q, p)] = c;
        }
    }
    let root = psd_square_root(&cov)?;

    let mut e2 = Vec::with_capacity(d * d);
    let mut e2_fact = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let i = MultiIndex::unit(d, a).add(&MultiIndex::unit(d, b));
            e2_fact.push(i.factorial_f64());
            e2.push(e_stack(model, theta0, &i)?);
        }
    }

    let chunks = ORACLE_CHUNKS.min(draws as u64);
    let base = draws / chunks as usize;
    let extra = draws % chunks as usize;
    let partials: Vec<(DVector<f64>, DVector<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n_c = base + usize::from((c as usize) < extra);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c));
            let mut sum = DVector::zeros(d);
            let mut sumsq = DVector::zeros(d);
            let mut g = DVector::zeros(m);
            for _ in 0..n_c {
                for k in 0..m {
                    g[k] = StandardNormal.sample(&mut rng);
                }
                let z = &root * &g;
                let score = DVector::from_iterator(d, (0..d).map(|k| z[k]));
                let h0 = &i_inv * score;
                let mut acc = DVector::zeros(d);
                for j in 0..d {
                    for k in 0..d {
                        acc[k] += z[d + j * d + k] * h0[j];
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        let w = h0[a] * h0[b] / e2_fact[a * d + b];
                        acc += &e2[a * d + b] * w;
                    }
                }
                let h1 = &i_inv * acc;
                for k in 0..d {
                    sum[k] += h1[k];
                    sumsq[k] += h1[k] * h1[k];
                }
            }
            (sum, sumsq)
        })
        .collect();

    let mut sum = DVector::zeros(d);
    let mut sumsq = DVector::zeros(d);
    for (s, sq) in partials {
        sum += s;
        sumsq += sq;
    }
    let nf = draws as f64;
    let mut mean = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    for k in 0..d {
        let mu = sum[k] / nf;
        let var = (sumsq[k] / nf - mu * mu).max(0.0);
        mean.push(mu);
        se.push((var / nf).sqrt());
    }
    Ok(OracleEstimate {
        mean,
        se,
        draws,
    })
}

/// Ranking of EAB vectors by norm, smallest (second-order preferred) first.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonVerdict {
    pub ranking: Vec<(String, f64)>,
    /// Label of the preferred estimator, or "tie".
    pub preferred: String,
    /// Norm gaps between consecutive ranked entries.
    pub margins: Vec<f64>,
}

pub fn compare(entries: &[(String, DVector<f64>)], kind: NormKind) -> Result<ComparisonVerdict> {
    if entries.len() < 2 {
        return Err(EngineError::Invalid(
            "comparison needs at least two EAB vectors".into(),
        ));
    }
    let mut ranking: Vec<(String, f64)> = entries
        .iter()
        .map(|(label, v)| (label.clone(), vector_norm(v, kind)))
        .collect();
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1));
    let margins = ranking.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let preferred = if ranking[1].1 - ranking[0].1 <= TIE_TOLERANCE {
        "tie".to_string()
    } else {
        ranking[0].0.clone()
    };
    Ok(ComparisonVerdict {
        ranking,
        preferred,
        margins,
    })
}

/// Oracle cross-check attached to a report.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub draws: usize,
    /// Largest componentwise |formula - oracle| / se against eab_mle.
    pub max_z: f64,
    pub agrees: bool,
}

/// Inputs selecting which EAB columns a report carries.
pub struct EabOptions<'a> {
    /// Full-dimension prior and loss for the Bayes column.
    pub bayes: Option<(&'a PriorDerivatives, &'a LossExponents)>,
    /// Alpha-block prior and loss for the hybrid column.
    pub hybrid: Option<(&'a PriorDerivatives, &'a LossExponents)>,
    pub oracle_draws: Option<usize>,
    pub seed: u64,
    pub norm: NormKind,
}

impl Default for EabOptions<'_> {
    fn default() -> Self {
        EabOptions {
            bayes: None,
            hybrid: None,
            oracle_draws: None,
            seed: 0,
            norm: NormKind::Euclidean,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EabReport {
    pub eab_mle: Vec<f64>,
    pub eab_bayes: Option<Vec<f64>>,
    pub eab_hybrid: Option<Vec<f64>>,
    pub norms: Vec<(String, f64)>,
    pub verdict: String,
    pub oracle: Option<OracleCheck>,
}

pub fn eab_report(model: &dyn Model, theta0: &[f64], opts: &EabOptions) -> Result<EabReport> {
    let mle = eab_mle(model, theta0)?;
    let mut entries = vec![("mle".to_string(), mle.clone())];
    let bayes = match opts.bayes {
        Some((prior, loss)) => {
            let v = eab_bayes(model, theta0, prior, loss)?;
            entries.push(("bayes".to_string(), v.clone()));
            Some(v)
        }
        None => None,
    };
    let hybrid = match opts.hybrid {
        Some((prior, loss)) => {
            let v = eab_hybrid(model, theta0, prior, loss)?;
            entries.push(("hybrid".to_string(), v.clone()));
            Some(v)
        }
        None => None,
    };
    let (norms, verdict) = if entries.len() >= 2 {
        let cmp = compare(&entries, opts.norm)?;
        (cmp.ranking, cmp.preferred)
    } else {
        let n = vector_norm(&mle, opts.norm);
        (vec![("mle".to_string(), n)], "mle".to_string())
    };
    let oracle = match opts.oracle_draws {
        Some(draws) => {
            let est = limit_simulation_oracle(model, theta0, draws, opts.seed)?;
            let max_z = est.max_z(&mle);
            Some(OracleCheck {
                mean: est.mean,
                se: est.se,
                draws: est.draws,
                max_z,
                agrees: max_z <= ORACLE_Z_BOUND,
            })
        }
        None => None,
    };
    Ok(EabReport {
        eab_mle: mle.iter().copied().collect(),
        eab_bayes: bayes.map(|v| v.iter().copied().collect()),
        eab_hybrid: hybrid.map(|v| v.iter().copied().collect()),
        norms,
        verdict,
        oracle,
    })
}
