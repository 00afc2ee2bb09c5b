//! Estimators: joint hybrid optimizer, plain maximum likelihood, Bayes
//! posterior summaries, the mixture hybrid EM, and closed-form estimators
//! for the uniform-scale and shrinking-kernel counterexample families.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::gauss_moments::LossExponents;
use crate::index_algebra::MultiIndex;
use crate::model_kit::models::FERGUSON_ALPHA_MAX;
use crate::model_kit::{Model, Sample};
use crate::numerics::{adaptive_simpson, derive_seed, fd_step, golden_section_max};

/// Loss on the Bayes block: even power loss, its squared special case, or
/// the 0-1 loss of half-width delta whose Bayes rule is the posterior mode.
#[derive(Debug, Clone)]
pub enum LossSpec {
    Power(LossExponents),
    Squared,
    ZeroOne(f64),
}

impl LossSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            LossSpec::Power(a) => {
                if a.dim() != d {
                    return Err(EngineError::DimensionMismatch {
                        expected: d,
                        got: a.dim(),
                    });
                }
                Ok(())
            }
            LossSpec::Squared => Ok(()),
            LossSpec::ZeroOne(delta) => {
                if !(*delta > 0.0) {
                    return Err(EngineError::Invalid("0-1 loss width must be > 0".into()));
                }
                Ok(())
            }
        }
    }

    /// Whether the Bayes rule for this loss is computed from posterior draws.
    fn is_monte_carlo(&self) -> bool {
        !matches!(self, LossSpec::ZeroOne(_))
    }
}

/// Proposal chain settings for posterior-mean losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chain_len: usize,
    pub burn_in: usize,
    pub proposal_scale: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chain_len: 20_000,
            burn_in: 5_000,
            proposal_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: 1e-8,
            max_iter: 200,
            restarts: 5,
            seed: 0,
            mcmc: McmcConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(seed: u64) -> Self {
        OptimizerConfig {
            seed,
            ..OptimizerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(EngineError::Invalid("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(EngineError::Invalid("max_iter must be positive".into()));
        }
        if self.mcmc.chain_len == 0 || !(self.mcmc.proposal_scale > 0.0) {
            return Err(EngineError::Invalid(
                "mcmc chain length and proposal scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

type PriorFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type PriorGradFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;

/// Log prior density evaluated on the full parameter vector, so priors on the
/// Bayes block may legitimately depend on the MLE block as well.
pub struct LogPrior {
    f: Box<PriorFn>,
    g: Option<Box<PriorGradFn>>,
}

impl LogPrior {
    pub fn from_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        LogPrior {
            f: Box::new(f),
            g: None,
        }
    }

    pub fn from_fn_grad(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        LogPrior {
            f: Box::new(f),
            g: Some(Box::new(g)),
        }
    }

    pub fn flat() -> Self {
        LogPrior::from_fn_grad(|_| 0.0, |theta| DVector::zeros(theta.len()))
    }

    /// Independent Gaussian prior on the leading coordinates, flat elsewhere.
    pub fn gaussian(means: Vec<f64>, vars: Vec<f64>) -> Self {
        assert_eq!(means.len(), vars.len());
        assert!(vars.iter().all(|&v| v > 0.0));
        let m2 = means.clone();
        let v2 = vars.clone();
        LogPrior::from_fn_grad(
            move |theta| {
                let mut lp = 0.0;
                for (j, (&m, &v)) in means.iter().zip(&vars).enumerate() {
                    let u = theta[j] - m;
                    lp += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + u * u / v);
                }
                lp
            },
            move |theta| {
                let mut g = DVector::zeros(theta.len());
                for (j, (&m, &v)) in m2.iter().zip(&v2).enumerate() {
                    g[j] = -(theta[j] - m) / v;
                }
                g
            },
        )
    }

    /// Conjugate mean prior N(mu1, Omega) for the p-variate normal model with
    /// theta = (mu, packed lower triangle of Omega); the normalizing constant
    /// depends on Omega and is kept.
    pub fn mvn_conjugate(p: usize, mu1: Vec<f64>) -> Self {
        assert_eq!(mu1.len(), p);
        let model = crate::model_kit::models::Mvn::new(p);
        LogPrior::from_fn(move |theta| {
            let mu: Vec<f64> = theta[..p].to_vec();
            let rest: Vec<f64> = mu1.iter().copied().chain(theta[p..].iter().copied()).collect();
            model.log_density(&mu, &rest)
        })
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        (self.f)(theta)
    }

    pub fn grad(&self, theta: &[f64]) -> DVector<f64> {
        if let Some(g) = &self.g {
            return g(theta);
        }
        let d = theta.len();
        let mut th = theta.to_vec();
        let mut out = DVector::zeros(d);
        for j in 0..d {
            let h = fd_step(theta[j], 1);
            th[j] = theta[j] + h;
            let fp = (self.f)(&th);
            th[j] = theta[j] - h;
            let fm = (self.f)(&th);
            th[j] = theta[j];
            out[j] = (fp - fm) / (2.0 * h);
        }
        out
    }
}

/// Fit diagnostics shared by the point estimators.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub gradient_norm: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub acceptance_rate: Option<f64>,
    pub ess: Option<f64>,
    pub mcmc_se: Option<Vec<f64>>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct HybridResult {
    pub alpha_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

/// Sum of per-observation log densities; NaN collapses to -inf.
pub fn log_likelihood(model: &dyn Model, sample: &Sample, theta: &[f64]) -> f64 {
    let mut v = 0.0;
    for i in 0..sample.n {
        v += model.log_density(sample.row(i), theta);
    }
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

pub fn penalized_log_likelihood(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    theta: &[f64],
) -> f64 {
    let v = log_likelihood(model, sample, theta) + prior.log_density(theta);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Objective over a subset of coordinates with the rest frozen at `base`.
struct Objective<'a> {
    model: &'a dyn Model,
    sample: &'a Sample,
    prior: Option<&'a LogPrior>,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Objective<'_> {
    fn theta(&self, z: &[f64]) -> Vec<f64> {
        let mut th = self.base.clone();
        for (k, &j) in self.free.iter().enumerate() {
            th[j] = z[k];
        }
        th
    }

    fn project(&self, z: &mut [f64]) {
        let mut th = self.theta(z);
        self.model.space().project(&mut th);
        for (k, &j) in self.free.iter().enumerate() {
            z[k] = th[j];
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        let th = self.theta(z);
        if !self.model.space().contains(&th) {
            return f64::NEG_INFINITY;
        }
        let mut v = log_likelihood(self.model, self.sample, &th);
        if let Some(p) = self.prior {
            v += p.log_density(&th);
        }
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    fn grad(&self, z: &[f64]) -> DVector<f64> {
        let th = self.theta(z);
        let d = th.len();
        let k = self.free.len();
        let mut g = DVector::zeros(k);
        for (m, &j) in self.free.iter().enumerate() {
            let idx = MultiIndex::unit(d, j);
            let mut s = 0.0;
            for i in 0..self.sample.n {
                s += self.model.log_density_deriv(self.sample.row(i), &th, &idx);
            }
            g[m] = s;
        }
        if let Some(p) = self.prior {
            let pg = p.grad(&th);
            for (m, &j) in self.free.iter().enumerate() {
                g[m] += pg[j];
            }
        }
        g
    }

    fn hess(&self, z: &[f64]) -> DMatrix<f64> {
        let th = self.theta(z);
        let d = th.len();
        let k = self.free.len();
        let mut h = DMatrix::zeros(k, k);
        for (a, &ja) in self.free.iter().enumerate() {
            for (b, &jb) in self.free.iter().enumerate().skip(a) {
                let idx = MultiIndex::unit(d, ja).add(&MultiIndex::unit(d, jb));
                let mut s = 0.0;
                for i in 0..self.sample.n {
                    s += self.model.log_density_deriv(self.sample.row(i), &th, &idx);
                }
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        if let Some(p) = self.prior {
            let mut th2 = th.clone();
            for (b, &jb) in self.free.iter().enumerate() {
                let step = fd_step(th[jb], 2);
                th2[jb] = th[jb] + step;
                let gp = p.grad(&th2);
                th2[jb] = th[jb] - step;
                let gm = p.grad(&th2);
                th2[jb] = th[jb];
                for (a, &ja) in self.free.iter().enumerate() {
                    h[(a, b)] += (gp[ja] - gm[ja]) / (2.0 * step);
                }
            }
            let sym = (h.clone() + h.transpose()) * 0.5;
            h = sym;
        }
        h
    }
}

struct Ascent {
    z: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    hess: DMatrix<f64>,
}

/// Newton-Raphson ascent with step-halving line search and box projection;
/// singular or non-ascending Newton systems fall back to a steepest ascent
/// step.
fn newton_ascent(obj: &Objective, z0: &[f64], tol_grad: f64, max_iter: usize) -> Ascent {
    let mut z = z0.to_vec();
    obj.project(&mut z);
    let mut value = obj.value(&z);
    let k = z.len();
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut hess = DMatrix::zeros(k, k);
    for _ in 0..max_iter {
        let g = obj.grad(&z);
        grad_norm = g.norm();
        hess = obj.hess(&z);
        if grad_norm < tol_grad {
            converged = true;
            break;
        }
        let newton = hess.clone().lu().solve(&g).map(|s| -s);
        let step = match newton {
            Some(s) if s.dot(&g) > 0.0 => s,
            _ => g.clone() * (1.0 / (1.0 + grad_norm)),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut zt: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            obj.project(&mut zt);
            let vt = obj.value(&zt);
            if vt > value {
                z = zt;
                value = vt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }
    if !converged {
        let g = obj.grad(&z);
        grad_norm = g.norm();
        converged = grad_norm < tol_grad;
    }
    Ascent {
        z,
        value,
        grad_norm,
        iterations,
        converged,
        hess,
    }
}

/// Effective sample size from the autocorrelation sum, truncated at the
/// first negative Geyer pair.
pub(crate) fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 10 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = chain.iter().sum::<f64>() / nf;
    let c0 = chain.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    if c0 <= 0.0 {
        return nf;
    }
    let lag_cov = |l: usize| {
        let mut s = 0.0;
        for i in 0..n - l {
            s += (chain[i] - mean) * (chain[i + l] - mean);
        }
        s / nf
    };
    let max_lag = (n / 2).min(2000);
    let mut tau = 1.0;
    let mut l = 1;
    while l + 1 <= max_lag {
        let pair = (lag_cov(l) + lag_cov(l + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        l += 2;
    }
    (nf / tau).clamp(1.0, nf)
}

struct McmcOutcome {
    mean: DVector<f64>,
    se: DVector<f64>,
    acceptance: f64,
    ess: f64,
    draws: Vec<f64>,
}

/// Seeded random-walk Metropolis over the free coordinates; the global
/// proposal factor is tuned toward 30% acceptance during burn-in only.
fn rwm_block(
    obj: &Objective,
    z0: &[f64],
    base_scales: &[f64],
    mcmc: &McmcConfig,
    seed: u64,
) -> McmcOutcome {
    let k = z0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = z0.to_vec();
    obj.project(&mut z);
    let mut lp = obj.value(&z);
    let mut factor = 1.0f64;
    let mut win_acc = 0usize;
    let mut win_n = 0usize;
    let mut acc_post = 0usize;
    let total = mcmc.burn_in + mcmc.chain_len;
    let mut draws: Vec<f64> = Vec::with_capacity(mcmc.chain_len * k);
    for step in 0..total {
        let mut zp = z.clone();
        for (j, s) in base_scales.iter().enumerate() {
            let u: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            zp[j] += factor * s * u;
        }
        let lpp = obj.value(&zp);
        let accept = lpp.is_finite()
            && (lpp >= lp || rng.gen_range(0.0..1.0f64).ln() < lpp - lp);
        if accept {
            z = zp;
            lp = lpp;
        }
        if step < mcmc.burn_in {
            win_n += 1;
            if accept {
                win_acc += 1;
            }
            if win_n == 100 {
                let rate = win_acc as f64 / 100.0;
                factor = (factor * (rate - 0.3).exp()).clamp(1e-3, 1e3);
                win_n = 0;
                win_acc = 0;
            }
        } else {
            if accept {
                acc_post += 1;
            }
            draws.extend_from_slice(&z);
        }
    }
    let m = mcmc.chain_len;
    let mut mean = DVector::zeros(k);
    let mut sd = DVector::zeros(k);
    let mut ess_min = m as f64;
    for j in 0..k {
        let col: Vec<f64> = draws.iter().skip(j).step_by(k).copied().collect();
        let mu = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m as f64;
        mean[j] = mu;
        sd[j] = var.max(0.0).sqrt();
        ess_min = ess_min.min(effective_sample_size(&col));
    }
    let se = sd.map(|s| s / ess_min.max(1.0).sqrt());
    McmcOutcome {
        mean,
        se,
        acceptance: acc_post as f64 / m as f64,
        ess: ess_min,
        draws,
    }
}

/// Proposal scales from the curvature at the mode, with a crude fallback.
fn proposal_scales(hess: &DMatrix<f64>, z: &[f64], proposal_scale: f64) -> Vec<f64> {
    let k = z.len();
    let neg = -hess.clone();
    let spread = 2.4 / (k as f64).sqrt();
    if let Some(inv) = neg.try_inverse() {
        let ok = (0..k).all(|j| inv[(j, j)] > 0.0 && inv[(j, j)].is_finite());
        if ok {
            return (0..k)
                .map(|j| proposal_scale * spread * inv[(j, j)].sqrt())
                .collect();
        }
    }
    (0..k)
        .map(|j| proposal_scale * 0.1 * (1.0 + z[j].abs()))
        .collect()
}

fn perturbed(init: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    init.iter()
        .map(|&v| v + rng.gen_range(-1.0..1.0) * 0.25 * (1.0 + v.abs()))
        .collect()
}

fn check_inputs(model: &dyn Model, sample: &Sample, init: &[f64]) -> Result<()> {
    if sample.n == 0 {
        return Err(EngineError::Invalid("empty sample".into()));
    }
    if sample.dim != model.obs_dim() {
        return Err(EngineError::DimensionMismatch {
            expected: model.obs_dim(),
            got: sample.dim,
        });
    }
    model.space().check(init)
}

/// Maximum likelihood by Newton-Raphson with restarts from perturbed inits.
pub fn mle_estimate(
    model: &dyn Model,
    sample: &Sample,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<Estimate> {
    config.validate()?;
    check_inputs(model, sample, init)?;
    let tol_grad = config.tol * (sample.n as f64).max(1.0);
    let free: Vec<usize> = (0..model.space().d()).collect();
    let obj = Objective {
        model,
        sample,
        prior: None,
        free,
        base: init.to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xA000));
    for r in 0..=config.restarts {
        let z0 = if r == 0 {
            init.to_vec()
        } else {
            perturbed(init, &mut rng)
        };
        let asc = newton_ascent(&obj, &z0, tol_grad, config.max_iter);
        if asc.converged {
            return Ok(Estimate {
                theta: asc.z,
                objective: asc.value,
                converged: true,
                diagnostics: Diagnostics {
                    gradient_norm: asc.grad_norm,
                    iterations: asc.iterations,
                    restarts_used: r,
                    ..Diagnostics::default()
                },
            });
        }
    }
    Err(EngineError::NonConvergence(format!(
        "mle on {} did not reach gradient norm {} after {} restarts",
        model.name(),
        tol_grad,
        config.restarts
    )))
}

/// Bayes rule over the free coordinates of `obj`: posterior mode under the
/// 0-1 loss, otherwise posterior draws summarized per the loss.
fn bayes_rule_step(
    obj: &Objective,
    z0: &[f64],
    loss: &LossSpec,
    config: &OptimizerConfig,
    tol_grad: f64,
    seed: u64,
) -> Result<(Vec<f64>, Diagnostics, f64)> {
    match loss {
        LossSpec::ZeroOne(_) => {
            let asc = newton_ascent(obj, z0, tol_grad, config.max_iter);
            if !asc.converged {
                return Err(EngineError::NonConvergence(
                    "posterior mode search failed".into(),
                ));
            }
            let diag = Diagnostics {
                gradient_norm: asc.grad_norm,
                iterations: asc.iterations,
                ..Diagnostics::default()
            };
            Ok((asc.z, diag, 0.0))
        }
        LossSpec::Squared | LossSpec::Power(_) => {
            let mode = newton_ascent(obj, z0, tol_grad.max(1e-6), 80);
            let scales = proposal_scales(&mode.hess, &mode.z, config.mcmc.proposal_scale);
            let out = rwm_block(obj, &mode.z, &scales, &config.mcmc, seed);
            let k = z0.len();
            let theta = match loss {
                LossSpec::Power(a) => (0..k)
                    .map(|j| power_loss_minimizer(&out.draws, k, j, a.entries()[j]))
                    .collect(),
                _ => out.mean.iter().copied().collect::<Vec<f64>>(),
            };
            let mut flags = Vec::new();
            if !(0.1..=0.6).contains(&out.acceptance) {
                flags.push(format!(
                    "acceptance_rate_outside_range: {:.3}",
                    out.acceptance
                ));
            }
            let mc_se = out.se.norm();
            let diag = Diagnostics {
                gradient_norm: mode.grad_norm,
                iterations: mode.iterations,
                acceptance_rate: Some(out.acceptance),
                ess: Some(out.ess),
                mcmc_se: Some(out.se.iter().copied().collect()),
                flags,
                ..Diagnostics::default()
            };
            Ok((theta, diag, mc_se))
        }
    }
}

/// Minimizer of the empirical even-power loss along one coordinate of the
/// kept draws.
fn power_loss_minimizer(draws: &[f64], stride: usize, coord: usize, a: usize) -> f64 {
    let col: Vec<f64> = draws.iter().skip(coord).step_by(stride).copied().collect();
    let m = col.len() as f64;
    let mean = col.iter().sum::<f64>() / m;
    if a == 2 {
        return mean;
    }
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return mean;
    }
    let f = |c: f64| -col.iter().map(|x| (c - x).powi(a as i32)).sum::<f64>();
    golden_section_max(&f, lo, hi, 1e-10 * (hi - lo))
}

/// Generalized Bayes estimator of the full parameter vector.
pub fn bayes_estimate(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    loss: &LossSpec,
    config: &OptimizerConfig,
) -> Result<Estimate> {
    config.validate()?;
    let init: Vec<f64> = default_init(model, sample);
    check_inputs(model, sample, &init)?;
    let d = model.space().d();
    loss.validate(d)?;
    let tol_grad = config.tol * (sample.n as f64).max(1.0);
    let obj = Objective {
        model,
        sample,
        prior: Some(prior),
        free: (0..d).collect(),
        base: init.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xB000));
    let mut last_err: Option<EngineError> = None;
    for r in 0..=config.restarts {
        let z0 = if r == 0 {
            init.clone()
        } else {
            perturbed(&init, &mut rng)
        };
        let seed = derive_seed(config.seed, 0xBA1E + r as u64);
        match bayes_rule_step(&obj, &z0, loss, config, tol_grad, seed) {
            Ok((theta, mut diag, _)) => {
                diag.restarts_used = r;
                let objective = obj.value(&theta);
                return Ok(Estimate {
                    theta,
                    objective,
                    converged: true,
                    diagnostics: diag,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| EngineError::NonConvergence("bayes estimate failed".into())))
}

/// Crude moment-based starting point used when the caller supplies none.
fn default_init(model: &dyn Model, sample: &Sample) -> Vec<f64> {
    let space = model.space();
    let d = space.d();
    let mut init = vec![0.0; d];
    let xbar = sample.data.iter().sum::<f64>() / sample.data.len() as f64;
    for j in 0..d {
        let (lo, hi) = space.bounds[j];
        init[j] = if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo + 1.0
        } else if hi.is_finite() {
            hi - 1.0
        } else {
            xbar
        };
    }
    space.project(&mut init);
    init
}

/// Bayes estimate started from an explicit point.
pub fn bayes_estimate_from(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    loss: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<Estimate> {
    config.validate()?;
    check_inputs(model, sample, init)?;
    let d = model.space().d();
    loss.validate(d)?;
    let tol_grad = config.tol * (sample.n as f64).max(1.0);
    let obj = Objective {
        model,
        sample,
        prior: Some(prior),
        free: (0..d).collect(),
        base: init.to_vec(),
    };
    let seed = derive_seed(config.seed, 0xBA1E);
    let (theta, mut diag, _) = bayes_rule_step(&obj, init, loss, config, tol_grad, seed)?;
    diag.restarts_used = 0;
    let objective = obj.value(&theta);
    Ok(Estimate {
        theta,
        objective,
        converged: true,
        diagnostics: diag,
    })
}

struct AlphaOutcome {
    grad_norm: f64,
    mc_se: f64,
    converged: bool,
    diag: Diagnostics,
}

fn alpha_step(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    loss: &LossSpec,
    theta: &mut [f64],
    config: &OptimizerConfig,
    tol_grad: f64,
    seed: u64,
) -> Result<AlphaOutcome> {
    let d1 = model.space().d1;
    let obj = Objective {
        model,
        sample,
        prior: Some(prior),
        free: (0..d1).collect(),
        base: theta.to_vec(),
    };
    let old: Vec<f64> = theta[..d1].to_vec();
    let mode_loss = matches!(loss, LossSpec::ZeroOne(_));
    match bayes_rule_step(&obj, &old, loss, config, tol_grad, seed) {
        Ok((z, diag, mc_se)) => {
            theta[..d1].copy_from_slice(&z);
            Ok(AlphaOutcome {
                grad_norm: if mode_loss { diag.gradient_norm } else { 0.0 },
                mc_se,
                converged: true,
                diag,
            })
        }
        Err(e) => Err(e),
    }
}

fn beta_step(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    theta: &mut [f64],
    tol_grad: f64,
    max_iter: usize,
) -> Ascent {
    let d1 = model.space().d1;
    let d = model.space().d();
    let obj = Objective {
        model,
        sample,
        prior: Some(prior),
        free: (d1..d).collect(),
        base: theta.to_vec(),
    };
    let old: Vec<f64> = theta[d1..].to_vec();
    let asc = newton_ascent(&obj, &old, tol_grad, max_iter);
    theta[d1..].copy_from_slice(&asc.z);
    asc
}

fn hybrid_checks(
    model: &dyn Model,
    sample: &Sample,
    loss_alpha: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<()> {
    config.validate()?;
    check_inputs(model, sample, init)?;
    let d1 = model.space().d1;
    let d2 = model.space().d2();
    if d1 == 0 || d2 == 0 {
        return Err(EngineError::Invalid(format!(
            "hybrid estimation needs d1 >= 1 and d2 >= 1, got d1 = {}, d2 = {}",
            d1, d2
        )));
    }
    loss_alpha.validate(d1)
}

/// Joint hybrid estimator: generalized Bayes on the alpha block and maximum
/// likelihood on the beta block, solved jointly. Models that declare a
/// beta-free inner Bayes step take a verified decoupling shortcut.
pub fn hybrid_estimate(
    model: &dyn Model,
    sample: &Sample,
    prior_alpha: &LogPrior,
    loss_alpha: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<HybridResult> {
    hybrid_checks(model, sample, loss_alpha, init, config)?;
    if model.decoupled_hybrid() {
        if let Some(res) = hybrid_decoupled(model, sample, prior_alpha, loss_alpha, init, config)? {
            return Ok(res);
        }
        let mut res = hybrid_block(model, sample, prior_alpha, loss_alpha, init, config)?;
        res.diagnostics
            .flags
            .push("decoupling_unverified".to_string());
        return Ok(res);
    }
    hybrid_block(model, sample, prior_alpha, loss_alpha, init, config)
}

/// Full block-coordinate path regardless of any decoupling declaration.
pub fn hybrid_estimate_full(
    model: &dyn Model,
    sample: &Sample,
    prior_alpha: &LogPrior,
    loss_alpha: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<HybridResult> {
    hybrid_checks(model, sample, loss_alpha, init, config)?;
    hybrid_block(model, sample, prior_alpha, loss_alpha, init, config)
}

fn assemble_hybrid(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    theta: &[f64],
    iterations: usize,
    converged: bool,
    diag: Diagnostics,
) -> HybridResult {
    let d1 = model.space().d1;
    HybridResult {
        alpha_hat: theta[..d1].to_vec(),
        beta_hat: theta[d1..].to_vec(),
        objective: penalized_log_likelihood(model, sample, prior, theta),
        iterations,
        converged,
        diagnostics: diag,
    }
}

/// One-sweep solution for models whose inner Bayes step is independent of
/// one block; the independence is verified numerically and failure reports
/// `None` so the caller can fall back to the full iteration.
fn hybrid_decoupled(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    loss: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<Option<HybridResult>> {
    let tol_grad = config.tol * (sample.n as f64).max(1.0);
    let d1 = model.space().d1;

    // Alpha-first order: the Bayes step should not move when beta updates.
    let mut theta = init.to_vec();
    model.space().project(&mut theta);
    let a1 = alpha_step(
        model,
        sample,
        prior,
        loss,
        &mut theta,
        config,
        tol_grad,
        derive_seed(config.seed, 0),
    )?;
    let alpha1: Vec<f64> = theta[..d1].to_vec();
    let b1 = beta_step(model, sample, prior, &mut theta, tol_grad, config.max_iter);
    let a2 = alpha_step(
        model,
        sample,
        prior,
        loss,
        &mut theta,
        config,
        tol_grad,
        derive_seed(config.seed, 1),
    )?;
    let drift = theta[..d1]
        .iter()
        .zip(&alpha1)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = 1.0 + alpha1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol_a = (100.0 * config.tol * scale).max(3.0 * (a1.mc_se + a2.mc_se));
    if drift <= tol_a {
        let b2 = beta_step(model, sample, prior, &mut theta, tol_grad, config.max_iter);
        let mut diag = a2.diag;
        diag.gradient_norm = b2.grad_norm.max(a2.grad_norm);
        diag.flags.push("decoupled".to_string());
        let converged = b2.converged && a2.converged;
        return Ok(Some(assemble_hybrid(
            model, sample, prior, &theta, 3, converged, diag,
        )));
    }
    let _ = (a1, b1);

    // Beta-first order: the likelihood step should not move when alpha
    // updates.
    let mut theta = init.to_vec();
    model.space().project(&mut theta);
    let b1 = beta_step(model, sample, prior, &mut theta, tol_grad, config.max_iter);
    let beta1: Vec<f64> = theta[d1..].to_vec();
    let a1 = alpha_step(
        model,
        sample,
        prior,
        loss,
        &mut theta,
        config,
        tol_grad,
        derive_seed(config.seed, 2),
    )?;
    let b2 = beta_step(model, sample, prior, &mut theta, tol_grad, config.max_iter);
    let drift_b = theta[d1..]
        .iter()
        .zip(&beta1)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale_b = 1.0 + beta1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if drift_b <= 100.0 * config.tol * scale_b && b1.converged {
        let mut diag = a1.diag;
        diag.gradient_norm = b2.grad_norm.max(a1.grad_norm);
        diag.flags.push("decoupled".to_string());
        let converged = b2.converged && a1.converged;
        return Ok(Some(assemble_hybrid(
            model, sample, prior, &theta, 3, converged, diag,
        )));
    }
    Ok(None)
}

fn hybrid_block(
    model: &dyn Model,
    sample: &Sample,
    prior: &LogPrior,
    loss: &LossSpec,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<HybridResult> {
    let n = (sample.n as f64).max(1.0);
    let tol_grad = config.tol * n;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xC000));
    let mut flags: Vec<String> = Vec::new();
    let mut total_iters = 0usize;
    let mut last_theta = init.to_vec();
    let mut last_grad = f64::INFINITY;
    for r in 0..=config.restarts {
        let mut theta = if r == 0 {
            init.to_vec()
        } else {
            perturbed(init, &mut rng)
        };
        model.space().project(&mut theta);
        let mut prev_obj = f64::NEG_INFINITY;
        let mut prev_theta = theta.clone();
        let mut decreases = 0usize;
        for it in 0..config.max_iter {
            total_iters += 1;
            let seed_it = derive_seed(config.seed, (r * config.max_iter + it) as u64);
            let a = alpha_step(
                model, sample, prior, loss, &mut theta, config, tol_grad, seed_it,
            )?;
            let b = beta_step(model, sample, prior, &mut theta, tol_grad, config.max_iter);
            let obj_val = penalized_log_likelihood(model, sample, prior, &theta);
            let dec_tol = 1e-9 * (1.0 + prev_obj.abs()) + 10.0 * n * a.mc_se * a.mc_se;
            if prev_obj.is_finite() && obj_val < prev_obj - dec_tol {
                decreases += 1;
                if decreases >= 2 {
                    flags.push(format!("oscillation_restart_at_iter_{}", it));
                    break;
                }
            }
            let change = theta
                .iter()
                .zip(&prev_theta)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            let conv_tol = if loss.is_monte_carlo() {
                (config.tol * (1.0 + norm)).max(3.0 * a.mc_se)
            } else {
                config.tol * (1.0 + norm)
            };
            let grad_now = b.grad_norm.max(a.grad_norm);
            last_grad = grad_now;
            if change < conv_tol && b.converged && a.converged {
                let mut diag = a.diag;
                diag.gradient_norm = grad_now;
                diag.iterations = it + 1;
                diag.restarts_used = r;
                diag.flags.extend(flags);
                return Ok(assemble_hybrid(
                    model,
                    sample,
                    prior,
                    &theta,
                    it + 1,
                    true,
                    diag,
                ));
            }
            prev_theta = theta.clone();
            prev_obj = obj_val;
        }
        last_theta = theta;
    }
    flags.push("restarts_exhausted".to_string());
    let diag = Diagnostics {
        gradient_norm: last_grad,
        iterations: total_iters,
        restarts_used: config.restarts,
        flags,
        ..Diagnostics::default()
    };
    Ok(assemble_hybrid(
        model,
        sample,
        prior,
        &last_theta,
        total_iters,
        false,
        diag,
    ))
}

/// Closed-form hybrid for the p-variate normal with the conjugate N(mu1,
/// Omega) prior on the mean: mu = (n xbar + mu1)/(n+1) and Omega equal to
/// the augmented scatter about mu divided by n+1.
pub fn mvn_hybrid_closed_form(
    sample: &Sample,
    mu1: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = sample.dim;
    if mu1.len() != p {
        return Err(EngineError::DimensionMismatch {
            expected: p,
            got: mu1.len(),
        });
    }
    if sample.n == 0 {
        return Err(EngineError::Invalid("empty sample".into()));
    }
    let n = sample.n as f64;
    let mut xbar = DVector::zeros(p);
    for i in 0..sample.n {
        for j in 0..p {
            xbar[j] += sample.row(i)[j];
        }
    }
    xbar /= n;
    let mu1v = DVector::from_column_slice(mu1);
    let mu = (xbar * n + &mu1v) / (n + 1.0);
    let mut scatter = DMatrix::zeros(p, p);
    for i in 0..sample.n {
        let u = DVector::from_iterator(p, (0..p).map(|j| sample.row(i)[j] - mu[j]));
        scatter += &u * u.transpose();
    }
    let v = &mu1v - &mu;
    scatter += &v * v.transpose();
    Ok((mu, scatter / (n + 1.0)))
}

/// Penalized mixture objective: observed-data log likelihood plus the
/// Gaussian log priors on the component means. Weights are renormalized.
pub fn mixture_em_objective(
    xs: &[f64],
    k: usize,
    mean_priors: &[(f64, f64)],
    theta: &[f64],
) -> f64 {
    let wsum: f64 = theta[..k].iter().sum();
    let mut v = 0.0;
    for &x in xs {
        let mut dens = 0.0;
        for j in 0..k {
            dens += theta[j] / wsum * normal_pdf(x, theta[k + j], theta[2 * k + j]);
        }
        v += dens.ln();
    }
    for j in 0..k {
        let (a0, tau2) = mean_priors[j];
        let u = theta[k + j] - a0;
        v += -0.5 * ((2.0 * std::f64::consts::PI * tau2).ln() + u * u / tau2);
    }
    v
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let u = x - mean;
    (-0.5 * u * u / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

const EM_VAR_FLOOR: f64 = 1e-8;

/// Hybrid EM for a k-component scalar Gaussian mixture with Gaussian priors
/// on the means; theta is laid out as (weights, means, variances).
pub fn mixture_hybrid_em(
    sample: &Sample,
    k: usize,
    mean_priors: &[(f64, f64)],
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<HybridResult> {
    Ok(mixture_hybrid_em_with_trace(sample, k, mean_priors, init, config)?.0)
}

/// Same as `mixture_hybrid_em` but also returns the penalized objective
/// after every accepted M-step.
pub fn mixture_hybrid_em_with_trace(
    sample: &Sample,
    k: usize,
    mean_priors: &[(f64, f64)],
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<(HybridResult, Vec<f64>)> {
    config.validate()?;
    if sample.dim != 1 || sample.n == 0 {
        return Err(EngineError::Invalid(
            "mixture EM expects a nonempty scalar sample".into(),
        ));
    }
    if k == 0 || mean_priors.len() != k || init.len() != 3 * k {
        return Err(EngineError::Invalid(
            "mixture EM needs k >= 1, k mean priors and a 3k init".into(),
        ));
    }
    if mean_priors.iter().any(|&(_, tau2)| !(tau2 > 0.0)) {
        return Err(EngineError::Invalid("prior variances must be > 0".into()));
    }
    if init[..k].iter().any(|&w| !(w > 0.0)) || init[2 * k..].iter().any(|&v| !(v > EM_VAR_FLOOR))
    {
        return Err(EngineError::Invalid(
            "init needs positive weights and variances above the floor".into(),
        ));
    }
    for a in 0..k {
        for b in a + 1..k {
            if (init[k + a] - init[k + b]).abs() < 1e-12 {
                return Err(EngineError::Invalid("init means must be distinct".into()));
            }
        }
    }
    let xs = sample.scalars();
    let n = xs.len();
    let nf = n as f64;
    let spread = {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo).max(1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xE0));
    let mut flags: Vec<String> = Vec::new();
    let mut total_iters = 0usize;
    let mut trace: Vec<f64> = Vec::new();
    let mut last_state: Option<(Vec<f64>, f64, f64)> = None;
    'restart: for r in 0..=config.restarts {
        let mut theta: Vec<f64> = init.to_vec();
        if r > 0 {
            for j in 0..k {
                theta[k + j] += rng.gen_range(-1.0..1.0) * 0.2 * spread;
            }
        }
        let wsum: f64 = theta[..k].iter().sum();
        for w in &mut theta[..k] {
            *w /= wsum;
        }
        let mut obj = mixture_em_objective(xs, k, mean_priors, &theta);
        trace.clear();
        trace.push(obj);
        let mut resp = vec![0.0; n * k];
        for it in 0..config.max_iter {
            total_iters += 1;
            for (i, &x) in xs.iter().enumerate() {
                let mut tot = 0.0;
                for j in 0..k {
                    let d = theta[j] * normal_pdf(x, theta[k + j], theta[2 * k + j]);
                    resp[i * k + j] = d;
                    tot += d;
                }
                for j in 0..k {
                    resp[i * k + j] /= tot;
                }
            }
            for j in 0..k {
                let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
                let sx: f64 = (0..n).map(|i| resp[i * k + j] * xs[i]).sum();
                let (a0, tau2) = mean_priors[j];
                let s = theta[2 * k + j];
                let alpha_new = (sx / s + a0 / tau2) / (nj / s + 1.0 / tau2);
                let scatter: f64 = (0..n)
                    .map(|i| resp[i * k + j] * (xs[i] - alpha_new) * (xs[i] - alpha_new))
                    .sum();
                theta[j] = nj / nf;
                theta[k + j] = alpha_new;
                theta[2 * k + j] = (scatter / nj).max(EM_VAR_FLOOR);
            }
            if theta[..k].iter().any(|&w| w < 1.0 / nf)
                || theta[2 * k..].iter().any(|&v| v <= EM_VAR_FLOOR)
            {
                flags.push(format!("degenerate_component_restart_{}", r));
                continue 'restart;
            }
            let obj_new = mixture_em_objective(xs, k, mean_priors, &theta);
            trace.push(obj_new);
            if obj_new < obj - 1e-9 * (1.0 + obj.abs()) {
                flags.push("em_objective_decreased".to_string());
            }
            let increment = obj_new - obj;
            obj = obj_new;
            if increment.abs() < config.tol * (1.0 + obj.abs()) {
                let result =
                    finish_mixture(k, &theta, obj, it + 1, true, r, increment.abs(), flags);
                return Ok((result, trace));
            }
        }
        last_state = Some((theta, obj, f64::NAN));
    }
    flags.push("restarts_exhausted".to_string());
    let Some((theta, obj, _)) = last_state else {
        return Err(EngineError::NonConvergence(
            "mixture EM: every restart hit a degenerate component".into(),
        ));
    };
    let result = finish_mixture(
        k,
        &theta,
        obj,
        total_iters,
        false,
        config.restarts,
        f64::NAN,
        flags,
    );
    Ok((result, trace))
}

#[allow(clippy::too_many_arguments)]
fn finish_mixture(
    k: usize,
    theta: &[f64],
    objective: f64,
    iterations: usize,
    converged: bool,
    restarts_used: usize,
    increment: f64,
    flags: Vec<String>,
) -> HybridResult {
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| theta[k + a].total_cmp(&theta[k + b]));
    let alpha_hat: Vec<f64> = order.iter().map(|&j| theta[k + j]).collect();
    let mut beta_hat: Vec<f64> = order.iter().map(|&j| theta[j]).collect();
    beta_hat.extend(order.iter().map(|&j| theta[2 * k + j]));
    HybridResult {
        alpha_hat,
        beta_hat,
        objective,
        iterations,
        converged,
        diagnostics: Diagnostics {
            gradient_norm: increment,
            iterations,
            restarts_used,
            flags,
            ..Diagnostics::default()
        },
    }
}

/// Grid maximum likelihood for the shrinking-kernel mixture: coarse scan at
/// resolution 1e-3 over [0, 1-1e-6] followed by golden-section refinement.
/// The likelihood is non-concave near 1 by design.
pub fn ferguson_mle(sample: &Sample, c: f64) -> Result<f64> {
    ferguson_validate(sample, c)?;
    let ll = |alpha: f64| ferguson_log_likelihood(sample, c, alpha);
    let step = 1e-3;
    let mut candidates: Vec<f64> = (0..1000).map(|g| g as f64 * step).collect();
    candidates.push(FERGUSON_ALPHA_MAX);
    // The kernel width shrinks faster than any fixed grid, so the likelihood
    // spikes at alpha equal to an observation are only visible when the
    // observations themselves are candidates.
    for &y in sample.scalars() {
        if (0.0..=FERGUSON_ALPHA_MAX).contains(&y) {
            candidates.push(y);
        }
    }
    let mut best = 0.0;
    let mut best_v = f64::NEG_INFINITY;
    for &a in &candidates {
        let v = ll(a);
        if v > best_v || (v == best_v && a > best) {
            best_v = v;
            best = a;
        }
    }
    if sample.scalars().contains(&best) {
        return Ok(best);
    }
    let lo = (best - step).max(0.0);
    let hi = (best + step).min(FERGUSON_ALPHA_MAX);
    let refined = golden_section_max(&ll, lo, hi, 1e-9);
    if ll(refined) >= best_v {
        Ok(refined)
    } else {
        Ok(best)
    }
}

/// Posterior mean under a flat prior on [0, 1-1e-6] and squared loss, by a
/// stabilized trapezoid rule on a fine grid.
pub fn ferguson_bayes(sample: &Sample, c: f64) -> Result<f64> {
    ferguson_validate(sample, c)?;
    let m = 2000usize;
    let step = FERGUSON_ALPHA_MAX / m as f64;
    let lls: Vec<f64> = (0..=m)
        .map(|g| ferguson_log_likelihood(sample, c, g as f64 * step))
        .collect();
    let top = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(EngineError::QuadratureFailure(
            "ferguson posterior has no finite mass on the grid".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (g, &ll) in lls.iter().enumerate() {
        let w = (ll - top).exp() * if g == 0 || g == m { 0.5 } else { 1.0 };
        num += g as f64 * step * w;
        den += w;
    }
    Ok(num / den)
}

/// Log likelihood for the shrinking-kernel mixture evaluated in log space.
/// The kernel width delta(alpha) underflows to zero in f64 for alpha above
/// roughly 0.89, which would erase the spikes at the observations even
/// though their log-density contribution (1-alpha)^{-c} - 1 is perfectly
/// representable; working with log delta directly keeps them.
fn ferguson_log_likelihood(sample: &Sample, c: f64, alpha: f64) -> f64 {
    let log_delta = (1.0 - alpha).ln() + 1.0 - (1.0 - alpha).powf(-c);
    let log_unif = if alpha > 0.0 {
        (alpha * 0.5).ln()
    } else {
        f64::NEG_INFINITY
    };
    let mut v = 0.0;
    for &x in sample.scalars() {
        if !(-1.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let gap = (x - alpha).abs();
        let log_tri = if gap.ln() < log_delta {
            let t = if gap == 0.0 {
                0.0
            } else {
                (gap.ln() - log_delta).exp()
            };
            (1.0 - alpha).ln() - log_delta + (1.0 - t).ln()
        } else {
            f64::NEG_INFINITY
        };
        let top = log_unif.max(log_tri);
        if top == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        v += top + ((log_unif - top).exp() + (log_tri - top).exp()).ln();
    }
    v
}

fn ferguson_validate(sample: &Sample, c: f64) -> Result<()> {
    if !(c > 2.0) {
        return Err(EngineError::Invalid("ferguson requires c > 2".into()));
    }
    if sample.n == 0 || sample.dim != 1 {
        return Err(EngineError::Invalid(
            "ferguson estimation expects a nonempty scalar sample".into(),
        ));
    }
    Ok(())
}

fn schwartz_validate(sample: &Sample) -> Result<f64> {
    if sample.n == 0 || sample.dim != 1 {
        return Err(EngineError::Invalid(
            "schwartz estimators expect a nonempty scalar sample".into(),
        ));
    }
    let mut ymax = f64::NEG_INFINITY;
    for &y in sample.scalars() {
        if !(0.0..2.0).contains(&y) {
            return Err(EngineError::OutOfBounds(format!(
                "observation {} outside [0, 2)",
                y
            )));
        }
        ymax = ymax.max(y);
    }
    Ok(ymax)
}

/// Exact MLE and Bayes estimators for the uniform-scale family: the MLE is
/// 1 when the sample maximum is at most 1 and 2/y_(n) otherwise, and the
/// Bayes posterior mean under the Lebesgue prior on [1, 2) has the printed
/// ratio-of-powers closed form.
pub fn schwartz_estimators(sample: &Sample) -> Result<(f64, f64)> {
    let ymax = schwartz_validate(sample)?;
    let n = sample.n as f64;
    if ymax <= 1.0 {
        let q = 2f64.powf(-(n + 1.0));
        let bayes = (n + 1.0) / (n + 2.0) * (2.0 - q) / (1.0 - q);
        Ok((1.0, bayes))
    } else {
        let b = 2.0 / ymax;
        let p1 = b.powf(-(n + 1.0));
        let p2 = b.powf(-(n + 2.0));
        let bayes = (n + 1.0) / (n + 2.0) * b * (1.0 - p2) / (1.0 - p1);
        Ok((b, bayes))
    }
}

/// Posterior mean for the uniform-scale family by direct quadrature of
/// integral theta^{n+1} over integral theta^n on [1, min(2, 2/y_(n))],
/// with the integrand rescaled by its value at the upper endpoint.
pub fn schwartz_bayes_quadrature(sample: &Sample) -> Result<f64> {
    let ymax = schwartz_validate(sample)?;
    let n = sample.n as f64;
    let b = if ymax <= 1.0 { 2.0 } else { 2.0 / ymax };
    let lb = b.ln();
    let g = move |t: f64| (n * (t.ln() - lb)).exp();
    let den = adaptive_simpson(&g, 1.0, b, 1e-12)?;
    let num = adaptive_simpson(&|t| t * g(t), 1.0, b, 1e-12)?;
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_kit::models::{
        gauss2_swapped, Ferguson, Gauss1, Gauss2, Mixture3, Mvn, Reordered, Schwartz,
    };

    fn scalars(v: &[f64]) -> Sample {
        Sample::from_scalars(v.to_vec())
    }

    fn draw(model: &dyn Model, theta: &[f64], n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.sample(theta, n, &mut rng)
    }

    #[test]
    fn loss_spec_validation() {
        assert!(LossSpec::ZeroOne(0.0).validate(1).is_err());
        assert!(LossSpec::ZeroOne(0.5).validate(1).is_ok());
        assert!(LossSpec::Squared.validate(7).is_ok());
        let a = LossExponents::new(vec![2, 4]).unwrap();
        assert!(LossSpec::Power(a.clone()).validate(2).is_ok());
        assert!(LossSpec::Power(a).validate(3).is_err());
    }

    #[test]
    fn optimizer_config_validation() {
        let mut cfg = OptimizerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.tol = 0.0;
        assert!(cfg.validate().is_err());
        cfg.tol = 1e-8;
        cfg.max_iter = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mle_gauss2_closed_form() {
        let model = Gauss2::new();
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let est = mle_estimate(&model, &sample, &[1.0, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(est.converged);
        assert!((est.theta[0] - 2.0).abs() < 1e-8, "mu {}", est.theta[0]);
        assert!(
            (est.theta[1] - 2.0 / 3.0).abs() < 1e-8,
            "var {}",
            est.theta[1]
        );
    }

    #[test]
    fn mle_gauss1_single_newton_step() {
        let model = Gauss1::new(1.0);
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let est = mle_estimate(&model, &sample, &[0.0], &OptimizerConfig::default()).unwrap();
        assert!((est.theta[0] - 2.0).abs() < 1e-12);
        assert_eq!(est.diagnostics.iterations, 1);
    }

    #[test]
    fn mle_rejects_init_outside_bounds() {
        let model = Gauss2::new();
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let res = mle_estimate(&model, &sample, &[0.0, -1.0], &OptimizerConfig::default());
        assert!(res.is_err());
    }

    #[test]
    fn bayes_conjugate_normal_mcmc_within_three_se() {
        let model = Gauss1::new(1.0);
        let sample = draw(&model, &[0.5], 50, 11);
        let n = sample.n as f64;
        let xbar = sample.scalars().iter().sum::<f64>() / n;
        let (mu1, s1) = (0.2, 0.5);
        let closed = (n * xbar / 1.0 + mu1 / s1) / (n / 1.0 + 1.0 / s1);
        let prior = LogPrior::gaussian(vec![mu1], vec![s1]);
        let cfg = OptimizerConfig::with_seed(42);
        let est = bayes_estimate(&model, &sample, &prior, &LossSpec::Squared, &cfg).unwrap();
        let se = est.diagnostics.mcmc_se.as_ref().unwrap()[0].max(1e-12);
        assert!(
            (est.theta[0] - closed).abs() < 3.0 * se,
            "mean {} closed {} se {}",
            est.theta[0],
            closed,
            se
        );
        assert!(est.diagnostics.ess.unwrap() > 100.0);
        let acc = est.diagnostics.acceptance_rate.unwrap();
        assert!((0.1..=0.6).contains(&acc), "acceptance {}", acc);
    }

    #[test]
    fn bayes_flat_zero_one_equals_mle() {
        let model = Gauss2::new();
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let cfg = OptimizerConfig::default();
        let mle = mle_estimate(&model, &sample, &[1.0, 1.0], &cfg).unwrap();
        let prior = LogPrior::flat();
        let map = bayes_estimate(&model, &sample, &prior, &LossSpec::ZeroOne(0.5), &cfg).unwrap();
        for j in 0..2 {
            assert!((map.theta[j] - mle.theta[j]).abs() < 1e-7);
        }
    }

    #[test]
    fn bayes_power_two_matches_squared() {
        let model = Gauss1::new(1.0);
        let sample = draw(&model, &[0.3], 30, 5);
        let prior = LogPrior::gaussian(vec![0.0], vec![1.0]);
        let cfg = OptimizerConfig::with_seed(9);
        let sq = bayes_estimate(&model, &sample, &prior, &LossSpec::Squared, &cfg).unwrap();
        let pw = bayes_estimate(
            &model,
            &sample,
            &prior,
            &LossSpec::Power(LossExponents::squared(1)),
            &cfg,
        )
        .unwrap();
        assert_eq!(sq.theta[0], pw.theta[0]);
    }

    #[test]
    fn bayes_is_seed_deterministic() {
        let model = Gauss1::new(1.0);
        let sample = draw(&model, &[0.3], 40, 6);
        let prior = LogPrior::gaussian(vec![0.0], vec![1.0]);
        let cfg = OptimizerConfig::with_seed(123);
        let a = bayes_estimate(&model, &sample, &prior, &LossSpec::Squared, &cfg).unwrap();
        let b = bayes_estimate(&model, &sample, &prior, &LossSpec::Squared, &cfg).unwrap();
        assert_eq!(a.theta, b.theta);
        let cfg2 = OptimizerConfig::with_seed(124);
        let c = bayes_estimate(&model, &sample, &prior, &LossSpec::Squared, &cfg2).unwrap();
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn mvn_hybrid_closed_form_fixture() {
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let (mu, omega) = mvn_hybrid_closed_form(&sample, &[0.0]).unwrap();
        assert!((mu[0] - 1.5).abs() < 1e-12);
        assert!((omega[(0, 0)] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn hybrid_mvn_optimizer_matches_closed_form() {
        let model = Mvn::new(1);
        let sample = scalars(&[1.0, 2.0, 3.0]);
        let prior = LogPrior::mvn_conjugate(1, vec![0.0]);
        let cfg = OptimizerConfig::default();
        let res = hybrid_estimate(
            &model,
            &sample,
            &prior,
            &LossSpec::ZeroOne(0.5),
            &[1.0, 1.0],
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        assert!(res.diagnostics.flags.iter().any(|f| f == "decoupled"));
        assert!((res.alpha_hat[0] - 1.5).abs() < 1e-6, "mu {}", res.alpha_hat[0]);
        assert!(
            (res.beta_hat[0] - 1.25).abs() < 1e-6,
            "omega {}",
            res.beta_hat[0]
        );
    }

    #[test]
    fn hybrid_mvn2_optimizer_matches_closed_form() {
        let model = Mvn::new(2);
        let theta0 = model.pack(&[0.3, -0.2], &DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]));
        let sample = draw(&model, &theta0, 8, 21);
        let mu1 = vec![0.0, 0.0];
        let (mu, omega) = mvn_hybrid_closed_form(&sample, &mu1).unwrap();
        let prior = LogPrior::mvn_conjugate(2, mu1);
        let init = model.pack(&[0.0, 0.0], &DMatrix::identity(2, 2));
        let cfg = OptimizerConfig::default();
        let res = hybrid_estimate(
            &model,
            &sample,
            &prior,
            &LossSpec::ZeroOne(0.5),
            &init,
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        for j in 0..2 {
            assert!((res.alpha_hat[j] - mu[j]).abs() < 1e-5);
        }
        let packed = [omega[(0, 0)], omega[(1, 0)], omega[(1, 1)]];
        for j in 0..3 {
            assert!(
                (res.beta_hat[j] - packed[j]).abs() < 1e-5,
                "omega coord {}: {} vs {}",
                j,
                res.beta_hat[j],
                packed[j]
            );
        }
    }

    #[test]
    fn hybrid_flat_zero_one_equals_mle() {
        let model = Gauss2::new();
        let sample = draw(&model, &[0.4, 0.9], 60, 33);
        let cfg = OptimizerConfig::default();
        let mle = mle_estimate(&model, &sample, &[0.0, 1.0], &cfg).unwrap();
        let res = hybrid_estimate(
            &model,
            &sample,
            &LogPrior::flat(),
            &LossSpec::ZeroOne(0.5),
            &[0.0, 1.0],
            &cfg,
        )
        .unwrap();
        assert!(res.converged);
        assert!((res.alpha_hat[0] - mle.theta[0]).abs() < 1e-6);
        assert!((res.beta_hat[0] - mle.theta[1]).abs() < 1e-6);
    }

    #[test]
    fn hybrid_rejects_degenerate_partition() {
        let model = Gauss1::new(1.0);
        let sample = scalars(&[1.0, 2.0]);
        let res = hybrid_estimate(
            &model,
            &sample,
            &LogPrior::flat(),
            &LossSpec::ZeroOne(0.5),
            &[0.0],
            &OptimizerConfig::default(),
        );
        assert!(res.is_err());
    }

    #[test]
    fn hybrid_decoupling_matches_full_block() {
        // Variance-first normal with an inverse-gamma prior on the variance
        // and plain likelihood maximization for the mean.
        let model = Reordered::new(Mvn::new(1), vec![1, 0], 1);
        let sample = draw(&Mvn::new(1), &[0.7, 1.3], 40, 77);
        let prior = LogPrior::from_fn(|theta: &[f64]| {
            let v = theta[0];
            if v <= 0.0 {
                f64::NEG_INFINITY
            } else {
                -3.0 * v.ln() - 1.0 / v
            }
        });
        let cfg = OptimizerConfig::default();
        let loss = LossSpec::ZeroOne(0.5);
        let init = [1.0, 0.0];
        let short = hybrid_estimate(&model, &sample, &prior, &loss, &init, &cfg).unwrap();
        assert!(short.diagnostics.flags.iter().any(|f| f == "decoupled"));
        let full = hybrid_estimate_full(&model, &sample, &prior, &loss, &init, &cfg).unwrap();
        assert!(short.converged && full.converged);
        assert!((short.alpha_hat[0] - full.alpha_hat[0]).abs() < 1e-6);
        assert!((short.beta_hat[0] - full.beta_hat[0]).abs() < 1e-6);
        let xbar = sample.scalars().iter().sum::<f64>() / sample.n as f64;
        assert!((short.beta_hat[0] - xbar).abs() < 1e-6);
    }

    #[test]
    fn hybrid_reports_nonconvergence_honestly() {
        let model = Gauss2::new();
        let sample = draw(&model, &[0.4, 0.9], 30, 3);
        let cfg = OptimizerConfig {
            max_iter: 1,
            restarts: 0,
            ..OptimizerConfig::default()
        };
        let res = hybrid_estimate(
            &model,
            &sample,
            &LogPrior::flat(),
            &LossSpec::ZeroOne(0.5),
            &[5.0, 4.0],
            &cfg,
        )
        .unwrap();
        assert!(!res.converged);
        assert!(res
            .diagnostics
            .flags
            .iter()
            .any(|f| f == "restarts_exhausted"));
    }

    #[test]
    fn first_order_closeness_slope() {
        let model = Gauss2::new();
        let prior = LogPrior::gaussian(vec![0.8], vec![0.25]);
        let cfg = OptimizerConfig::default();
        let loss = LossSpec::ZeroOne(0.5);
        let mut slopes_bayes = Vec::new();
        let mut slopes_hybrid = Vec::new();
        for seed in 0..8u64 {
            let mut dist_b = Vec::new();
            let mut dist_h = Vec::new();
            for &n in &[1000usize, 10000] {
                let sample = draw(&model, &[0.3, 0.7], n, 500 + seed * 10 + n as u64);
                let mle = mle_estimate(&model, &sample, &[0.0, 1.0], &cfg).unwrap();
                let map =
                    bayes_estimate(&model, &sample, &prior, &loss, &cfg).unwrap();
                let hyb = hybrid_estimate(&model, &sample, &prior, &loss, &[0.0, 1.0], &cfg)
                    .unwrap();
                let db = ((map.theta[0] - mle.theta[0]).powi(2)
                    + (map.theta[1] - mle.theta[1]).powi(2))
                .sqrt();
                let dh = ((hyb.alpha_hat[0] - mle.theta[0]).powi(2)
                    + (hyb.beta_hat[0] - mle.theta[1]).powi(2))
                .sqrt();
                dist_b.push(db);
                dist_h.push(dh);
            }
            slopes_bayes.push((dist_b[1] / dist_b[0]).ln() / 10f64.ln());
            slopes_hybrid.push((dist_h[1] / dist_h[0]).ln() / 10f64.ln());
        }
        slopes_bayes.sort_by(f64::total_cmp);
        slopes_hybrid.sort_by(f64::total_cmp);
        let med_b = slopes_bayes[slopes_bayes.len() / 2];
        let med_h = slopes_hybrid[slopes_hybrid.len() / 2];
        assert!((-1.4..=-0.6).contains(&med_b), "bayes slope {}", med_b);
        assert!((-1.4..=-0.6).contains(&med_h), "hybrid slope {}", med_h);
    }

    #[test]
    fn em_k1_one_step_is_conjugate_update() {
        let model = Gauss1::new(0.64);
        let sample = draw(&model, &[0.4], 20, 8);
        let n = sample.n as f64;
        let xbar = sample.scalars().iter().sum::<f64>() / n;
        let (a0, tau2) = (0.1, 0.5);
        let s = 0.64;
        let closed = (n * xbar / s + a0 / tau2) / (n / s + 1.0 / tau2);
        let cfg = OptimizerConfig {
            max_iter: 1,
            restarts: 0,
            ..OptimizerConfig::default()
        };
        let res = mixture_hybrid_em(&sample, 1, &[(a0, tau2)], &[1.0, 0.0, s], &cfg).unwrap();
        assert!((res.alpha_hat[0] - closed).abs() < 1e-10);
    }

    #[test]
    fn em_k1_diffuse_prior_gives_sample_moments() {
        let model = Gauss1::new(1.0);
        let sample = draw(&model, &[0.4], 200, 14);
        let n = sample.n as f64;
        let xbar = sample.scalars().iter().sum::<f64>() / n;
        let svar = sample
            .scalars()
            .iter()
            .map(|x| (x - xbar) * (x - xbar))
            .sum::<f64>()
            / n;
        let cfg = OptimizerConfig::default();
        let res = mixture_hybrid_em(&sample, 1, &[(0.0, 1e8)], &[1.0, 0.0, 1.0], &cfg).unwrap();
        assert!(res.converged);
        assert!((res.alpha_hat[0] - xbar).abs() < 1e-4);
        assert!((res.beta_hat[1] - svar).abs() < 1e-4);
    }

    const TABLE_TRUTH: [f64; 9] = [
        0.190, 0.540, 0.270, -0.850, 0.220, 1.350, 0.450, 0.200, 0.860,
    ];

    #[test]
    fn em_objective_monotone_over_fifty_seeded_runs() {
        let model = Mixture3::new();
        let priors = [(-0.85, 0.1), (0.22, 0.1), (1.35, 0.1)];
        for seed in 0..50u64 {
            let sample = draw(&model, &TABLE_TRUTH, 150, 900 + seed);
            let init = [0.3, 0.3, 0.4, -1.0, 0.1, 1.2, 0.5, 0.3, 0.9];
            let cfg = OptimizerConfig::with_seed(seed);
            let (res, trace) =
                mixture_hybrid_em_with_trace(&sample, 3, &priors, &init, &cfg).unwrap();
            assert!(!res
                .diagnostics
                .flags
                .iter()
                .any(|f| f == "em_objective_decreased"));
            for w in trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()),
                    "seed {}: {} -> {}",
                    seed,
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn em_recovers_mixture_truth_at_n300() {
        let model = Mixture3::new();
        let priors = [(-0.85, 0.1), (0.22, 0.1), (1.35, 0.1)];
        let init = [0.3, 0.4, 0.3, -1.0, 0.3, 1.2, 0.4, 0.25, 0.8];
        let truth_means = [-0.85, 0.22, 1.35];
        let mut errs = vec![Vec::new(); 3];
        for seed in 0..5u64 {
            let sample = draw(&model, &TABLE_TRUTH, 300, 4242 + seed);
            let cfg = OptimizerConfig {
                seed,
                max_iter: 3000,
                ..OptimizerConfig::default()
            };
            let res = mixture_hybrid_em(&sample, 3, &priors, &init, &cfg).unwrap();
            assert!(res.converged);
            assert!(res.alpha_hat[0] < res.alpha_hat[1] && res.alpha_hat[1] < res.alpha_hat[2]);
            for j in 0..3 {
                errs[j].push((res.alpha_hat[j] - truth_means[j]).abs());
            }
        }
        for (j, e) in errs.iter_mut().enumerate() {
            e.sort_by(f64::total_cmp);
            assert!(e[2] < 0.3, "mean {}: median error {}", j, e[2]);
        }
    }

    #[test]
    fn em_validates_inputs() {
        let sample = scalars(&[0.1, 0.2, 0.3]);
        let cfg = OptimizerConfig::default();
        assert!(mixture_hybrid_em(&sample, 2, &[(0.0, 1.0)], &[0.5; 6], &cfg).is_err());
        assert!(
            mixture_hybrid_em(&sample, 1, &[(0.0, 0.0)], &[1.0, 0.0, 1.0], &cfg).is_err()
        );
        let same_means = [0.5, 0.5, 0.1, 0.1, 1.0, 1.0];
        assert!(
            mixture_hybrid_em(&sample, 2, &[(0.0, 1.0), (0.0, 1.0)], &same_means, &cfg).is_err()
        );
    }

    #[test]
    fn schwartz_closed_form_fixtures() {
        let (bh, bb) = schwartz_estimators(&scalars(&[0.2, 0.5, 0.9])).unwrap();
        assert_eq!(bh, 1.0);
        assert!((bb - 124.0 / 75.0).abs() < 1e-14);
        let (bh1, bb1) = schwartz_estimators(&scalars(&[1.6])).unwrap();
        assert!((bh1 - 1.25).abs() < 1e-14);
        let expected = (0.953125 / 3.0) / (0.5625 / 2.0);
        assert!((bb1 - expected).abs() < 1e-12, "{} vs {}", bb1, expected);
        assert!(schwartz_estimators(&scalars(&[2.1])).is_err());
        assert!(schwartz_estimators(&scalars(&[])).is_err());
    }

    #[test]
    fn schwartz_quadrature_matches_closed_form() {
        for sample in [
            scalars(&[0.2, 0.5, 0.9]),
            scalars(&[1.6]),
            draw(&Schwartz::new(), &[1.7], 40, 19),
        ] {
            let (_, closed) = schwartz_estimators(&sample).unwrap();
            let quad = schwartz_bayes_quadrature(&sample).unwrap();
            assert!(
                (quad - closed).abs() < 1e-10,
                "quad {} closed {}",
                quad,
                closed
            );
        }
    }

    #[test]
    fn schwartz_bayes_limit_is_two() {
        // Exact integer check of |bayes_n - 2(n+1)/(n+2)| < 4/2^n, which is
        // the 2^-n-rate part of the limit; the remaining gap to 2 is the
        // rational factor 2(n+1)/(n+2) and decays like 2/(n+2).
        for n in 5u32..=100 {
            let num: u128 = (1u128 << (n + 2)) - 1;
            let den: u128 = (1u128 << (n + 1)) - 1;
            // bayes = (n+1) num / ((n+2) den); bayes - 2(n+1)/(n+2)
            // = (n+1) / ((n+2) den), so the bound is 2^n (n+1) < 4 (n+2) den.
            let lhs = (1u128 << n) * (n as u128 + 1);
            let rhs = 4 * (n as u128 + 2) * den;
            assert!(lhs < rhs, "n = {}", n);
            let _ = num;
        }
        // Floating point check of the same decomposition on a sample.
        for n in [5usize, 10, 20, 40] {
            let sample = scalars(&vec![0.5; n]);
            let (_, bayes) = schwartz_estimators(&sample).unwrap();
            let nf = n as f64;
            let rational = 2.0 * (nf + 1.0) / (nf + 2.0);
            assert!((bayes - rational).abs() < 4.0 * 2f64.powi(-(n as i32)));
            assert!((bayes - 2.0).abs() < 3.0 / (nf + 2.0));
        }
    }

    #[test]
    fn ferguson_density_boundary_cases() {
        let model = Ferguson::new(3.0);
        assert!((model.delta(0.0) - 1.0).abs() < 1e-15);
        for x in [-0.7, -0.1, 0.2, 0.9] {
            let dens = model.log_density(&[x], &[0.0]).exp();
            assert!((dens - (1.0 - x.abs())).abs() < 1e-12);
        }
    }

    #[test]
    fn ferguson_mle_drifts_to_one() {
        let model = Ferguson::new(3.0);
        let mut high = 0;
        for seed in 0..5u64 {
            let sample = draw(&model, &[0.5], 2000, 7000 + seed);
            let ahat = ferguson_mle(&sample, 3.0).unwrap();
            if ahat > 0.95 {
                high += 1;
            }
        }
        assert!(high >= 3, "only {} of 5 runs exceeded 0.95", high);
    }

    #[test]
    fn ferguson_bayes_stays_near_truth() {
        let model = Ferguson::new(3.0);
        let mut errs = Vec::new();
        for seed in 0..5u64 {
            let sample = draw(&model, &[0.5], 2000, 7100 + seed);
            errs.push((ferguson_bayes(&sample, 3.0).unwrap() - 0.5).abs());
        }
        errs.sort_by(f64::total_cmp);
        assert!(errs[errs.len() / 2] < 0.2, "median error {}", errs[2]);
    }

    #[test]
    fn ferguson_validates_inputs() {
        let sample = scalars(&[0.1]);
        assert!(ferguson_mle(&sample, 1.5).is_err());
        assert!(ferguson_mle(&scalars(&[]), 3.0).is_err());
    }

    #[test]
    fn hybrid_squared_loss_runs_on_swapped_normal() {
        let model = gauss2_swapped();
        let sample = draw(&Gauss2::new(), &[0.4, 0.9], 80, 55);
        let prior = LogPrior::from_fn_grad(
            |theta: &[f64]| {
                let v = theta[0];
                if v <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -2.5 * v.ln() - 1.0 / v
                }
            },
            |theta: &[f64]| {
                let mut g = DVector::zeros(theta.len());
                g[0] = -2.5 / theta[0] + 1.0 / (theta[0] * theta[0]);
                g
            },
        );
        let cfg = OptimizerConfig::with_seed(2024);
        let res = hybrid_estimate(
            &model,
            &sample,
            &prior,
            &LossSpec::Squared,
            &[1.0, 0.0],
            &cfg,
        )
        .unwrap();
        assert!(res.converged, "flags {:?}", res.diagnostics.flags);
        assert!(res.alpha_hat[0] > 0.0);
        assert!((res.beta_hat[0] - 0.4).abs() < 0.5);
    }
}
