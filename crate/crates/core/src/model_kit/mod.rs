//! Parametric-model abstraction: log-density derivatives, Fisher information
//! and its alpha/beta blocks, derivative expectations, centered empirical
//! statistics, and data ingestion.

pub mod models;

use crate::error::{EngineError, Result};
use crate::index_algebra::{multi_indices_of_norm, MultiIndex};
use crate::numerics::{adaptive_simpson, fd_step, gauss_hermite};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Parameter space with an alpha/beta partition: the first `d1` coordinates
/// form the Bayes block, the rest the MLE block.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    pub d1: usize,
    pub names: Vec<String>,
    /// Open interval per coordinate; infinite endpoints allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl ParamSpace {
    pub fn new(d1: usize, names: Vec<&str>, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(names.len(), bounds.len());
        assert!(d1 <= names.len());
        ParamSpace {
            d1,
            names: names.into_iter().map(|s| s.to_string()).collect(),
            bounds,
        }
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn d2(&self) -> usize {
        self.d() - self.d1
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.d()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(t, (lo, hi))| t.is_finite() && t > lo && t < hi)
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.d() {
            return Err(EngineError::DimensionMismatch {
                expected: self.d(),
                got: theta.len(),
            });
        }
        for (k, (t, (lo, hi))) in theta.iter().zip(&self.bounds).enumerate() {
            if !(t.is_finite() && t > lo && t < hi) {
                return Err(EngineError::OutOfBounds(format!(
                    "{} = {} outside ({}, {})",
                    self.names[k], t, lo, hi
                )));
            }
        }
        Ok(())
    }

    /// Project into the open box, keeping a small margin from each finite
    /// endpoint.
    pub fn project(&self, theta: &mut [f64]) {
        for (t, (lo, hi)) in theta.iter_mut().zip(&self.bounds) {
            let width = if hi.is_finite() && lo.is_finite() {
                hi - lo
            } else {
                1.0
            };
            let margin = 1e-9 * width.max(1.0);
            if lo.is_finite() && *t <= lo + margin {
                *t = lo + margin;
            }
            if hi.is_finite() && *t >= hi - margin {
                *t = hi - margin;
            }
        }
    }
}

/// Dense observation batch: `n` rows of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Vec<f64>,
    pub n: usize,
    pub dim: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        let n = data.len() / dim;
        Sample { data, n, dim }
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        Sample::new(values, 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scalars(&self) -> &[f64] {
        assert_eq!(self.dim, 1);
        &self.data
    }
}

/// Observation-space description used by the numeric expectation fallback.
#[derive(Debug, Clone)]
pub enum Support {
    /// One-dimensional continuous observation on a finite interval.
    Interval { lo: f64, hi: f64 },
    /// Nonnegative integer counts.
    Counts,
    /// Multivariate Gaussian observation; enables tensorized quadrature.
    Gaussian { mean: Vec<f64>, cov: DMatrix<f64> },
    /// Anything else: seeded Monte Carlo through the sampler.
    Sampled,
}

/// A parametric data model. `log_density_deriv` defaults to nested central
/// finite differences of the log density; bundled models override it with
/// closed forms where the expansion machinery needs high accuracy.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    fn space(&self) -> &ParamSpace;
    fn obs_dim(&self) -> usize;
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64;

    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        fd_log_density_deriv(self, x, theta, i)
    }

    /// Analytic E_theta l_i(X|theta) when available.
    fn expectation(&self, _theta: &[f64], _i: &MultiIndex) -> Option<f64> {
        None
    }

    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample;

    fn support(&self, theta: &[f64]) -> Support;

    /// Whether the inner Bayes step of the hybrid criterion is known to be
    /// free of the beta block, enabling the decoupled solution path.
    fn decoupled_hybrid(&self) -> bool {
        false
    }
}

/// Central finite differences of the log density, nested per derivative
/// order. Steps follow the truncation/round-off balance for each order.
pub fn fd_log_density_deriv<M: Model + ?Sized>(
    model: &M,
    x: &[f64],
    theta: &[f64],
    i: &MultiIndex,
) -> f64 {
    if i.is_zero() {
        return model.log_density(x, theta);
    }
    let j = i.0.iter().position(|&e| e > 0).unwrap();
    let h = fd_step(theta[j], i.norm());
    let lower = i.sub(&MultiIndex::unit(i.dim(), j)).unwrap();
    let mut tp = theta.to_vec();
    let mut tm = theta.to_vec();
    tp[j] += h;
    tm[j] -= h;
    (fd_inner(model, x, &tp, &lower) - fd_inner(model, x, &tm, &lower)) / (2.0 * h)
}

fn fd_inner<M: Model + ?Sized>(model: &M, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
    if i.is_zero() {
        model.log_density(x, theta)
    } else {
        // Route through the trait so analytic lower orders are reused.
        model.log_density_deriv(x, theta, i)
    }
}

/// Fisher information with its alpha/beta partition blocks.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub d1: usize,
    pub i_mat: DMatrix<f64>,
    pub i_inv: DMatrix<f64>,
}

impl FisherBlocks {
    pub fn from_information(i_mat: DMatrix<f64>, d1: usize) -> Result<Self> {
        let chol = i_mat.clone().cholesky().ok_or_else(|| {
            EngineError::NotPositiveDefinite {
                context: "Fisher information".into(),
            }
        })?;
        let i_inv = chol.inverse();
        Ok(FisherBlocks { d1, i_mat, i_inv })
    }

    pub fn d(&self) -> usize {
        self.i_mat.nrows()
    }

    fn slice(m: &DMatrix<f64>, d1: usize, r: usize, c: usize) -> DMatrix<f64> {
        let d = m.nrows();
        let (r0, rn) = if r == 1 { (0, d1) } else { (d1, d - d1) };
        let (c0, cn) = if c == 1 { (0, d1) } else { (d1, d - d1) };
        m.view((r0, c0), (rn, cn)).into_owned()
    }

    /// Block of I itself: `block(1,1)` is I_11 and so on.
    pub fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        Self::slice(&self.i_mat, self.d1, r, c)
    }

    /// Block of the inverse: `inv_block(1,1)` is I^11 and so on.
    pub fn inv_block(&self, r: usize, c: usize) -> DMatrix<f64> {
        Self::slice(&self.i_inv, self.d1, r, c)
    }
}

/// Default quadrature tolerance / Monte Carlo budget for derivative
/// expectations with no analytic form.
pub const DEFAULT_EXPECTATION_TOL: f64 = 1e-10;
pub const DEFAULT_MC_BUDGET: usize = 200_000;

/// E_theta l_i(X|theta): analytic oracle when the model has one, numeric
/// fallback otherwise.
pub fn expectation_of_deriv(model: &dyn Model, theta: &[f64], i: &MultiIndex) -> Result<f64> {
    if let Some(v) = model.expectation(theta, i) {
        return Ok(v);
    }
    numeric_expectation(model, theta, i, DEFAULT_MC_BUDGET, 0x5eed)
}

/// E_theta[l_i(X|theta) l_j(X|theta)]: the product moment of two log-density
/// derivatives, via the same support dispatch as `numeric_expectation`.
pub fn product_expectation(
    model: &dyn Model,
    theta: &[f64],
    i: &MultiIndex,
    j: &MultiIndex,
) -> Result<f64> {
    let f = move |x: &[f64]| {
        model.log_density_deriv(x, theta, i) * model.log_density_deriv(x, theta, j)
    };
    numeric_expectation_fn(model, theta, &f, DEFAULT_MC_BUDGET, 0x5eed)
}

/// Numeric E_theta l_i(X|theta): adaptive quadrature on one-dimensional
/// supports, tensor Gauss-Hermite on Gaussian ones, seeded Monte Carlo
/// otherwise (errors when the standard error exceeds 1e-4 relative).
pub fn numeric_expectation(
    model: &dyn Model,
    theta: &[f64],
    i: &MultiIndex,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    if i.norm() > 4 {
        return Err(EngineError::OrderTooLarge {
            order: i.norm(),
            bound: 4,
        });
    }
    let f = move |x: &[f64]| model.log_density_deriv(x, theta, i);
    numeric_expectation_fn(model, theta, &f, budget, seed)
}

/// E_theta f(X) under the model at theta for an arbitrary integrand,
/// dispatching on the declared support exactly as `numeric_expectation`.
pub fn numeric_expectation_fn(
    model: &dyn Model,
    theta: &[f64],
    f: &dyn Fn(&[f64]) -> f64,
    budget: usize,
    seed: u64,
) -> Result<f64> {
    model.space().check(theta)?;
    match model.support(theta) {
        Support::Interval { lo, hi } => {
            let g = |x: f64| {
                let obs = [x];
                let dens = model.log_density(&obs, theta).exp();
                if dens == 0.0 {
                    0.0
                } else {
                    f(&obs) * dens
                }
            };
            adaptive_simpson(&g, lo, hi, DEFAULT_EXPECTATION_TOL)
        }
        Support::Counts => {
            let mut total = 0.0;
            let mut k = 0usize;
            let mut tail_small = 0usize;
            loop {
                let obs = [k as f64];
                let dens = model.log_density(&obs, theta).exp();
                total += dens * f(&obs);
                if dens < 1e-18 && k > 2 {
                    tail_small += 1;
                    if tail_small > 5 {
                        break;
                    }
                } else {
                    tail_small = 0;
                }
                k += 1;
                if k > 1_000_000 {
                    return Err(EngineError::QuadratureFailure(
                        "count summation did not terminate".into(),
                    ));
                }
            }
            Ok(total)
        }
        Support::Gaussian { mean, cov } => {
            let p = mean.len();
            let chol = cov.cholesky().ok_or_else(|| EngineError::NotPositiveDefinite {
                context: "observation covariance".into(),
            })?;
            let l = chol.l();
            let (nodes, weights) = gauss_hermite(40);
            let nn = nodes.len();
            let norm = std::f64::consts::PI.sqrt();
            let mut total = 0.0;
            let mut idx = vec![0usize; p];
            loop {
                let mut w = 1.0;
                let mut x = mean.clone();
                for a in 0..p {
                    w *= weights[idx[a]] / norm;
                    let z = std::f64::consts::SQRT_2 * nodes[idx[a]];
                    for r in 0..p {
                        x[r] += l[(r, a)] * z;
                    }
                }
                total += w * f(x.as_slice());
                let mut carry = true;
                for slot in idx.iter_mut() {
                    if carry {
                        *slot += 1;
                        if *slot == nn {
                            *slot = 0;
                        } else {
                            carry = false;
                        }
                    }
                }
                if carry {
                    break;
                }
            }
            Ok(total)
        }
        Support::Sampled => {
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sample = model.sample(theta, budget, &mut rng);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for r in 0..sample.n {
                let v = f(sample.row(r));
                if !v.is_finite() {
                    return Err(EngineError::QuadratureFailure(
                        "non-finite integrand in Monte Carlo expectation".into(),
                    ));
                }
                sum += v;
                sumsq += v * v;
            }
            let nf = sample.n as f64;
            let mean = sum / nf;
            let var = (sumsq / nf - mean * mean).max(0.0);
            let se = (var / nf).sqrt();
            if se > 1e-4 * mean.abs().max(1.0) {
                return Err(EngineError::QuadratureFailure(format!(
                    "Monte Carlo standard error {se:.3e} exceeds tolerance"
                )));
            }
            Ok(mean)
        }
    }
}

/// I_jk = -E l_{e_j + e_k}; inverse by Cholesky; blocks per the partition.
pub fn fisher_information(model: &dyn Model, theta: &[f64]) -> Result<FisherBlocks> {
    model.space().check(theta)?;
    let d = model.space().d();
    let mut i_mat = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            let idx = MultiIndex::unit(d, j).add(&MultiIndex::unit(d, k));
            let v = -expectation_of_deriv(model, theta, &idx)?;
            i_mat[(j, k)] = v;
            i_mat[(k, j)] = v;
        }
    }
    FisherBlocks::from_information(i_mat, model.space().d1)
}

/// Centered normalized derivative sums and their expectations at theta0.
#[derive(Debug, Clone)]
pub struct EmpiricalStats {
    pub theta0: Vec<f64>,
    pub n: usize,
    /// Vector stacks: component k of `delta[i]` is delta_{i + e_k}.
    pub delta: BTreeMap<MultiIndex, DVector<f64>>,
    /// Vector stacks: component k of `expectations[i]` is E l_{i + e_k}.
    pub expectations: BTreeMap<MultiIndex, DVector<f64>>,
    /// Scalar delta_i for 1 <= |i| <= max_order + 1.
    pub delta_scalar: BTreeMap<MultiIndex, f64>,
    /// Scalar E l_i for 1 <= |i| <= max_order + 1.
    pub escalar: BTreeMap<MultiIndex, f64>,
    pub fisher: FisherBlocks,
    pub max_order: usize,
}

impl EmpiricalStats {
    pub fn d(&self) -> usize {
        self.theta0.len()
    }

    pub fn delta0(&self) -> &DVector<f64> {
        &self.delta[&MultiIndex::zeros(self.d())]
    }
}

/// Populate Delta_i / E_i for |i| <= max_order and the scalar tables one
/// order higher (the vector stacks shift indices by one unit).
pub fn empirical_stats(
    model: &dyn Model,
    sample: &Sample,
    theta0: &[f64],
    max_order: usize,
) -> Result<EmpiricalStats> {
    if sample.n < 2 {
        return Err(EngineError::Invalid("need at least 2 observations".into()));
    }
    if max_order > 3 {
        return Err(EngineError::OrderTooLarge {
            order: max_order,
            bound: 3,
        });
    }
    model.space().check(theta0)?;
    let d = model.space().d();
    let sqrt_n = (sample.n as f64).sqrt();

    let mut all_indices: Vec<MultiIndex> = Vec::new();
    for norm in 1..=(max_order + 1) {
        all_indices.extend(multi_indices_of_norm(d, norm));
    }

    let mut escalar = BTreeMap::new();
    for idx in &all_indices {
        escalar.insert(idx.clone(), expectation_of_deriv(model, theta0, idx)?);
    }

    let mut sums: BTreeMap<MultiIndex, f64> =
        all_indices.iter().map(|i| (i.clone(), 0.0)).collect();
    for r in 0..sample.n {
        let x = sample.row(r);
        for idx in &all_indices {
            let v = model.log_density_deriv(x, theta0, idx);
            if !v.is_finite() {
                return Err(EngineError::Invalid(format!(
                    "non-finite derivative l_{idx} at observation {r}"
                )));
            }
            *sums.get_mut(idx).unwrap() += v;
        }
    }

    let mut delta_scalar = BTreeMap::new();
    for idx in &all_indices {
        let centered = sums[idx] - sample.n as f64 * escalar[idx];
        delta_scalar.insert(idx.clone(), centered / sqrt_n);
    }

    let mut delta = BTreeMap::new();
    let mut expectations = BTreeMap::new();
    for norm in 0..=max_order {
        for idx in multi_indices_of_norm(d, norm) {
            let mut dv = DVector::zeros(d);
            let mut ev = DVector::zeros(d);
            for k in 0..d {
                let shifted = idx.add(&MultiIndex::unit(d, k));
                dv[k] = delta_scalar[&shifted];
                ev[k] = escalar[&shifted];
            }
            delta.insert(idx.clone(), dv);
            expectations.insert(idx, ev);
        }
    }

    let fisher = fisher_information(model, theta0)?;
    Ok(EmpiricalStats {
        theta0: theta0.to_vec(),
        n: sample.n,
        delta,
        expectations,
        delta_scalar,
        escalar,
        fisher,
        max_order,
    })
}

/// Report of the worst analytic-vs-finite-difference deviation per order.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_relative_deviation: f64,
    pub worst_index: MultiIndex,
}

/// Compare the derivative oracle at orders 1..=order against central finite
/// differences of the next-lower-order oracle at one observation.
pub fn fd_check(model: &dyn Model, theta: &[f64], x: &[f64], order: usize) -> FdReport {
    let d = model.space().d();
    let mut worst = 0.0f64;
    let mut worst_index = MultiIndex::zeros(d);
    for norm in 1..=order.min(3) {
        for idx in multi_indices_of_norm(d, norm) {
            let analytic = model.log_density_deriv(x, theta, &idx);
            let j = idx.0.iter().position(|&e| e > 0).unwrap();
            let lower = idx.sub(&MultiIndex::unit(d, j)).unwrap();
            let h = fd_step(theta[j], norm);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += h;
            tm[j] -= h;
            let fd = (model.log_density_deriv(x, &tp, &lower)
                - model.log_density_deriv(x, &tm, &lower))
                / (2.0 * h);
            let scale = analytic.abs().max(fd.abs()).max(1.0);
            let dev = (analytic - fd).abs() / scale;
            if dev > worst {
                worst = dev;
                worst_index = idx.clone();
            }
        }
    }
    FdReport {
        max_relative_deviation: worst,
        worst_index,
    }
}

/// Read a CSV of numeric rows (comma separated, '.' decimal); a single
/// leading non-numeric row is treated as a header and skipped.
pub fn ingest_csv(path: &std::path::Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path)?;
    ingest_csv_text(&text)
}

pub fn ingest_csv_text(text: &str) -> Result<Sample> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EngineError::Csv {
                        line: lineno + 1,
                        message: "non-finite value (NaN or infinity)".into(),
                    });
                }
                match width {
                    None => width = Some(values.len()),
                    Some(w) if w != values.len() => {
                        return Err(EngineError::Csv {
                            line: lineno + 1,
                            message: format!("expected {w} columns, got {}", values.len()),
                        })
                    }
                    _ => {}
                }
                rows.push(values);
            }
            Err(_) => {
                // NaN spellings must not slip through as header rows.
                if fields
                    .iter()
                    .any(|f| f.eq_ignore_ascii_case("nan") || f.eq_ignore_ascii_case("inf"))
                {
                    return Err(EngineError::Csv {
                        line: lineno + 1,
                        message: "non-finite value (NaN or infinity)".into(),
                    });
                }
                if rows.is_empty() && width.is_none() {
                    // header row: skipped
                    continue;
                }
                return Err(EngineError::Csv {
                    line: lineno + 1,
                    message: "malformed numeric row".into(),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(EngineError::Invalid("empty csv input".into()));
    }
    let dim = width.unwrap();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        data.extend(r);
    }
    Ok(Sample::new(data, dim))
}
