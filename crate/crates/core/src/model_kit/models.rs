//! Bundled models with analytic derivative and expectation oracles where the
//! expansion machinery needs high accuracy.

use super::{Model, ParamSpace, Sample, Support};
use crate::index_algebra::MultiIndex;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// Gaussian location model N(mu, v) with known variance v.
pub struct Gauss1 {
    space: ParamSpace,
    pub var: f64,
}

impl Gauss1 {
    pub fn new(var: f64) -> Self {
        Gauss1 {
            space: ParamSpace::new(1, vec!["mu"], vec![(f64::NEG_INFINITY, f64::INFINITY)]),
            var,
        }
    }
}

impl Model for Gauss1 {
    fn name(&self) -> &'static str {
        "gauss1"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let u = x[0] - theta[0];
        -0.5 * (LN_2PI + self.var.ln()) - u * u / (2.0 * self.var)
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        let u = x[0] - theta[0];
        match i.0[0] {
            0 => self.log_density(x, theta),
            1 => u / self.var,
            2 => -1.0 / self.var,
            _ => 0.0,
        }
    }
    fn expectation(&self, _theta: &[f64], i: &MultiIndex) -> Option<f64> {
        Some(match i.0[0] {
            2 => -1.0 / self.var,
            _ => 0.0,
        })
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let sd = self.var.sqrt();
        let data = (0..count)
            .map(|_| theta[0] + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Gaussian {
            mean: vec![theta[0]],
            cov: DMatrix::from_element(1, 1, self.var),
        }
    }
}

/// N(mu, sigma^2) with theta = (mu, sigma^2).
pub struct Gauss2 {
    space: ParamSpace,
}

impl Gauss2 {
    pub fn new() -> Self {
        Gauss2 {
            space: ParamSpace::new(
                1,
                vec!["mu", "sigma2"],
                vec![(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY)],
            ),
        }
    }
}

impl Default for Gauss2 {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for Gauss2 {
    fn name(&self) -> &'static str {
        "gauss2"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let s = theta[1];
        let u = x[0] - theta[0];
        -0.5 * (LN_2PI + s.ln()) - u * u / (2.0 * s)
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        let s = theta[1];
        let u = x[0] - theta[0];
        let (a, b) = (i.0[0], i.0[1]);
        match (a, b) {
            (0, 0) => self.log_density(x, theta),
            (0, 1) => -0.5 / s + u * u / (2.0 * s * s),
            (0, 2) => 0.5 / (s * s) - u * u / s.powi(3),
            (0, 3) => -1.0 / s.powi(3) + 3.0 * u * u / s.powi(4),
            (0, 4) => 3.0 / s.powi(4) - 12.0 * u * u / s.powi(5),
            // d^b/ds^b (u/s) = (-1)^b b! u / s^{b+1}
            (1, _) => {
                let fact: f64 = (1..=b as u64).product::<u64>() as f64;
                let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact * u / s.powi(b as i32 + 1)
            }
            // d^b/ds^b (-1/s) = -(-1)^b b! / s^{b+1}
            (2, _) => {
                let fact: f64 = (1..=b as u64).product::<u64>() as f64;
                let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                -sign * fact / s.powi(b as i32 + 1)
            }
            _ => 0.0,
        }
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        let s = theta[1];
        Some(match (i.0[0], i.0[1]) {
            (2, 0) => -1.0 / s,
            (0, 2) => -0.5 / (s * s),
            (2, 1) => 1.0 / (s * s),
            (0, 3) => 2.0 / s.powi(3),
            (2, 2) => -2.0 / s.powi(3),
            (0, 4) => -9.0 / s.powi(4),
            _ => 0.0,
        })
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let sd = theta[1].sqrt();
        let data = (0..count)
            .map(|_| theta[0] + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Gaussian {
            mean: vec![theta[0]],
            cov: DMatrix::from_element(1, 1, theta[1]),
        }
    }
}

/// Exponential with rate theta.
pub struct ExpRate {
    space: ParamSpace,
}

impl ExpRate {
    pub fn new() -> Self {
        ExpRate {
            space: ParamSpace::new(1, vec!["rate"], vec![(0.0, f64::INFINITY)]),
        }
    }
}

impl Default for ExpRate {
    fn default() -> Self {
        Self::new()
    }
}

fn exp_rate_deriv(theta: f64, x: f64, k: usize) -> f64 {
    match k {
        0 => theta.ln() - theta * x,
        1 => 1.0 / theta - x,
        _ => {
            // d^k/dtheta^k ln(theta) = (-1)^{k-1} (k-1)! / theta^k
            let fact: f64 = (1..=(k as u64 - 1)).product::<u64>() as f64;
            let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
            sign * fact / theta.powi(k as i32)
        }
    }
}

impl Model for ExpRate {
    fn name(&self) -> &'static str {
        "exprate"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        if x[0] < 0.0 {
            f64::NEG_INFINITY
        } else {
            theta[0].ln() - theta[0] * x[0]
        }
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        exp_rate_deriv(theta[0], x[0], i.0[0])
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        Some(match i.0[0] {
            0 => theta[0].ln() - 1.0,
            1 => 0.0,
            k => exp_rate_deriv(theta[0], 0.0, k),
        })
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let data = (0..count)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..1.0);
                -(1.0 - u).ln() / theta[0]
            })
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval {
            lo: 0.0,
            hi: 42.0 / theta[0],
        }
    }
}

/// Poisson with rate lambda. Counterexample to the shortcut identity
/// E l_3 = -dI/dlambda (the direct value is 2/lambda^2, the shortcut 1/lambda^2).
pub struct Poisson {
    space: ParamSpace,
}

impl Poisson {
    pub fn new() -> Self {
        Poisson {
            space: ParamSpace::new(1, vec!["lambda"], vec![(0.0, f64::INFINITY)]),
        }
    }
}

impl Default for Poisson {
    fn default() -> Self {
        Self::new()
    }
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

impl Model for Poisson {
    fn name(&self) -> &'static str {
        "poisson"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let k = x[0].round() as usize;
        x[0] * theta[0].ln() - theta[0] - ln_factorial(k)
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        let lam = theta[0];
        match i.0[0] {
            0 => self.log_density(x, theta),
            1 => x[0] / lam - 1.0,
            k => {
                // d^k/dlam^k (x ln lam) = x (-1)^{k-1} (k-1)! / lam^k
                let fact: f64 = (1..=(k as u64 - 1)).product::<u64>() as f64;
                let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact * x[0] / lam.powi(k as i32)
            }
        }
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        let lam = theta[0];
        Some(match i.0[0] {
            0 => return None,
            1 => 0.0,
            k => {
                let fact: f64 = (1..=(k as u64 - 1)).product::<u64>() as f64;
                let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact / lam.powi(k as i32 - 1)
            }
        })
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        // Inversion by sequential search; fine for moderate rates.
        let lam = theta[0];
        let data = (0..count)
            .map(|_| {
                let mut u: f64 = rng.gen_range(0.0..1.0);
                let mut p = (-lam).exp();
                let mut k = 0usize;
                while u > p && k < 10_000 {
                    u -= p;
                    k += 1;
                    p *= lam / k as f64;
                }
                k as f64
            })
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Counts
    }
}

/// Product of d independent exponential rate families.
pub struct ProdExp {
    space: ParamSpace,
}

impl ProdExp {
    pub fn new(d: usize) -> Self {
        let names: Vec<String> = (0..d).map(|j| format!("rate{}", j + 1)).collect();
        ProdExp {
            space: ParamSpace {
                d1: d,
                names,
                bounds: vec![(0.0, f64::INFINITY); d],
            },
        }
    }
}

impl Model for ProdExp {
    fn name(&self) -> &'static str {
        "prodexp"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        self.space.d()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(x)
            .map(|(&t, &xi)| if xi < 0.0 { f64::NEG_INFINITY } else { t.ln() - t * xi })
            .sum()
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        let active: Vec<usize> = (0..i.dim()).filter(|&j| i.0[j] > 0).collect();
        match active.len() {
            0 => self.log_density(x, theta),
            1 => {
                let j = active[0];
                exp_rate_deriv(theta[j], x[j], i.0[j])
            }
            _ => 0.0,
        }
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        let active: Vec<usize> = (0..i.dim()).filter(|&j| i.0[j] > 0).collect();
        Some(match active.len() {
            0 => theta.iter().map(|t| t.ln() - 1.0).sum(),
            1 => {
                let j = active[0];
                match i.0[j] {
                    1 => 0.0,
                    k => exp_rate_deriv(theta[j], 0.0, k),
                }
            }
            _ => 0.0,
        })
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let d = theta.len();
        let mut data = Vec::with_capacity(count * d);
        for _ in 0..count {
            for &t in theta {
                let u: f64 = rng.gen_range(0.0..1.0);
                data.push(-(1.0 - u).ln() / t);
            }
        }
        Sample::new(data, d)
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Sampled
    }
}

/// The inverse-information block over (sigma1^2, sigma2^2, rho) for a
/// bivariate normal; the corresponding information block is its inverse
/// because the mean and covariance blocks are information-orthogonal.
pub fn bv_inv_info_alpha(s1: f64, s2: f64, rho: f64) -> DMatrix<f64> {
    let r2 = rho * rho;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            2.0 * s1 * s1,
            2.0 * r2 * s1 * s2,
            rho * (1.0 - r2) * s1,
            2.0 * r2 * s1 * s2,
            2.0 * s2 * s2,
            rho * (1.0 - r2) * s2,
            rho * (1.0 - r2) * s1,
            rho * (1.0 - r2) * s2,
            (1.0 - r2) * (1.0 - r2),
        ],
    )
}

/// Third-order derivative expectations over (sigma1^2, sigma2^2, rho) for
/// the bivariate normal, as closed forms.
pub fn bv_escalar_alpha(s1: f64, s2: f64, rho: f64, i: &[usize; 3]) -> Option<f64> {
    let r = rho;
    let r2 = r * r;
    let omr = 1.0 - r2;
    Some(match *i {
        [3, 0, 0] => (16.0 - 7.0 * r2) / (8.0 * omr * s1.powi(3)),
        [0, 3, 0] => (16.0 - 7.0 * r2) / (8.0 * omr * s2.powi(3)),
        [0, 0, 3] => -4.0 * r * (3.0 + r2) / omr.powi(3),
        [2, 1, 0] => -3.0 * r2 / (8.0 * omr * s1 * s1 * s2),
        [1, 2, 0] => -3.0 * r2 / (8.0 * omr * s1 * s2 * s2),
        [2, 0, 1] => (3.0 * r.powi(3) - 5.0 * r) / (4.0 * omr * omr * s1 * s1),
        [0, 2, 1] => (3.0 * r.powi(3) - 5.0 * r) / (4.0 * omr * omr * s2 * s2),
        [1, 0, 2] => (1.0 + r2) / (omr * omr * s1),
        [0, 1, 2] => (1.0 + r2) / (omr * omr * s2),
        [1, 1, 1] => r * (1.0 + r2) / (4.0 * omr * omr * s1 * s2),
        _ => return None,
    })
}

fn bv_log_density(x: &[f64], mu1: f64, mu2: f64, s1: f64, s2: f64, rho: f64) -> f64 {
    let omr = 1.0 - rho * rho;
    let u1 = x[0] - mu1;
    let u2 = x[1] - mu2;
    let q = (u1 * u1 / s1 - 2.0 * rho * u1 * u2 / (s1 * s2).sqrt() + u2 * u2 / s2) / omr;
    -LN_2PI - 0.5 * (s1 * s2 * omr).ln() - 0.5 * q
}

fn bv_sample(
    mu1: f64,
    mu2: f64,
    s1: f64,
    s2: f64,
    rho: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let mut data = Vec::with_capacity(count * 2);
    for _ in 0..count {
        let z1: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let z2: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        let x1 = mu1 + s1.sqrt() * z1;
        let x2 = mu2 + s2.sqrt() * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        data.push(x1);
        data.push(x2);
    }
    Sample::new(data, 2)
}

/// Bivariate normal, theta = (mu1, mu2, sigma1^2, sigma2^2, rho), with the
/// mean pair as the first block.
pub struct BvNormal {
    space: ParamSpace,
}

impl BvNormal {
    pub fn new() -> Self {
        BvNormal {
            space: ParamSpace::new(
                2,
                vec!["mu1", "mu2", "sigma1_2", "sigma2_2", "rho"],
                vec![
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (0.0, f64::INFINITY),
                    (0.0, f64::INFINITY),
                    (-1.0, 1.0),
                ],
            ),
        }
    }
}

impl Default for BvNormal {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for BvNormal {
    fn name(&self) -> &'static str {
        "bvnormal"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        bv_log_density(x, theta[0], theta[1], theta[2], theta[3], theta[4])
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        let (s1, s2, rho) = (theta[2], theta[3], theta[4]);
        match i.norm() {
            1 => Some(0.0),
            2 => {
                let mean_part: usize = i.0[0] + i.0[1];
                if mean_part == 1 {
                    return Some(0.0);
                }
                if mean_part == 2 {
                    let omr = 1.0 - rho * rho;
                    let v = match (i.0[0], i.0[1]) {
                        (2, 0) => 1.0 / (omr * s1),
                        (0, 2) => 1.0 / (omr * s2),
                        (1, 1) => -rho / (omr * (s1 * s2).sqrt()),
                        _ => unreachable!(),
                    };
                    return Some(-v);
                }
                // pure covariance-block pair: information is the inverse of
                // the closed-form inverse-information block
                let inv = bv_inv_info_alpha(s1, s2, rho);
                let info = inv.try_inverse()?;
                let pos: Vec<usize> = (2..5)
                    .flat_map(|j| std::iter::repeat(j - 2).take(i.0[j]))
                    .collect();
                let (a, b) = if pos.len() == 2 { (pos[0], pos[1]) } else { return None };
                Some(-info[(a, b)])
            }
            3 if i.0[0] == 0 && i.0[1] == 0 => {
                bv_escalar_alpha(s1, s2, rho, &[i.0[2], i.0[3], i.0[4]])
            }
            _ => None,
        }
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        bv_sample(theta[0], theta[1], theta[2], theta[3], theta[4], count, rng)
    }
    fn support(&self, theta: &[f64]) -> Support {
        let (s1, s2, rho) = (theta[2], theta[3], theta[4]);
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[s1, rho * (s1 * s2).sqrt(), rho * (s1 * s2).sqrt(), s2],
        );
        Support::Gaussian {
            mean: vec![theta[0], theta[1]],
            cov,
        }
    }
}

/// Bivariate normal restricted to alpha = (sigma1^2, sigma2^2, rho) with the
/// means held fixed; the whole parameter is the Bayes block.
pub struct BvAlpha {
    space: ParamSpace,
    pub mu1: f64,
    pub mu2: f64,
}

impl BvAlpha {
    pub fn new(mu1: f64, mu2: f64) -> Self {
        BvAlpha {
            space: ParamSpace::new(
                3,
                vec!["sigma1_2", "sigma2_2", "rho"],
                vec![(0.0, f64::INFINITY), (0.0, f64::INFINITY), (-1.0, 1.0)],
            ),
            mu1,
            mu2,
        }
    }
}

impl Model for BvAlpha {
    fn name(&self) -> &'static str {
        "bvalpha"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        bv_log_density(x, self.mu1, self.mu2, theta[0], theta[1], theta[2])
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        let (s1, s2, rho) = (theta[0], theta[1], theta[2]);
        match i.norm() {
            1 => Some(0.0),
            2 => {
                let inv = bv_inv_info_alpha(s1, s2, rho);
                let info = inv.try_inverse()?;
                let pos: Vec<usize> = (0..3)
                    .flat_map(|j| std::iter::repeat(j).take(i.0[j]))
                    .collect();
                Some(-info[(pos[0], pos[1])])
            }
            3 => bv_escalar_alpha(s1, s2, rho, &[i.0[0], i.0[1], i.0[2]]),
            _ => None,
        }
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        bv_sample(self.mu1, self.mu2, theta[0], theta[1], theta[2], count, rng)
    }
    fn support(&self, theta: &[f64]) -> Support {
        let (s1, s2, rho) = (theta[0], theta[1], theta[2]);
        let cov = DMatrix::from_row_slice(
            2,
            2,
            &[s1, rho * (s1 * s2).sqrt(), rho * (s1 * s2).sqrt(), s2],
        );
        Support::Gaussian {
            mean: vec![self.mu1, self.mu2],
            cov,
        }
    }
}

/// Multivariate normal N(mu, Omega) with theta = (mu, packed lower triangle
/// of Omega by rows); the mean is the Bayes block.
pub struct Mvn {
    space: ParamSpace,
    pub p: usize,
}

impl Mvn {
    pub fn new(p: usize) -> Self {
        let mut names: Vec<String> = (0..p).map(|j| format!("mu{}", j + 1)).collect();
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); p];
        for r in 0..p {
            for c in 0..=r {
                names.push(format!("omega{}{}", r + 1, c + 1));
                if r == c {
                    bounds.push((0.0, f64::INFINITY));
                } else {
                    bounds.push((f64::NEG_INFINITY, f64::INFINITY));
                }
            }
        }
        Mvn {
            space: ParamSpace { d1: p, names, bounds },
            p,
        }
    }

    pub fn unpack_cov(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.p;
        let mut omega = DMatrix::zeros(p, p);
        let mut k = p;
        for r in 0..p {
            for c in 0..=r {
                omega[(r, c)] = theta[k];
                omega[(c, r)] = theta[k];
                k += 1;
            }
        }
        omega
    }

    pub fn pack(&self, mu: &[f64], omega: &DMatrix<f64>) -> Vec<f64> {
        let mut theta = mu.to_vec();
        for r in 0..self.p {
            for c in 0..=r {
                theta.push(omega[(r, c)]);
            }
        }
        theta
    }
}

impl Model for Mvn {
    fn name(&self) -> &'static str {
        "mvn"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        self.p
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let p = self.p;
        let omega = self.unpack_cov(theta);
        let chol = match omega.cholesky() {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let u = nalgebra::DVector::from_iterator(p, (0..p).map(|j| x[j] - theta[j]));
        let solved = chol.solve(&u);
        -0.5 * (p as f64 * LN_2PI + logdet + u.dot(&solved))
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let p = self.p;
        let omega = self.unpack_cov(theta);
        let l = omega.cholesky().expect("covariance must be SPD").l();
        let mut data = Vec::with_capacity(count * p);
        for _ in 0..count {
            let z: Vec<f64> = (0..p)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect();
            for r in 0..p {
                let mut v = theta[r];
                for c in 0..=r {
                    v += l[(r, c)] * z[c];
                }
                data.push(v);
            }
        }
        Sample::new(data, p)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Gaussian {
            mean: theta[..self.p].to_vec(),
            cov: self.unpack_cov(theta),
        }
    }
    fn decoupled_hybrid(&self) -> bool {
        true
    }
}

/// The Ferguson one-parameter mixture with shrinking triangular kernel:
/// f(x|alpha) = (1-alpha) f0((x-alpha)/delta)/delta + alpha/2 on [-1, 1],
/// with delta(alpha) = (1-alpha) exp(-(1-alpha)^{-c} + 1).
pub struct Ferguson {
    space: ParamSpace,
    pub c: f64,
}

pub const FERGUSON_ALPHA_MAX: f64 = 1.0 - 1e-6;

impl Ferguson {
    pub fn new(c: f64) -> Self {
        assert!(c > 2.0, "require c > 2");
        Ferguson {
            space: ParamSpace::new(1, vec!["alpha"], vec![(-1e-12, FERGUSON_ALPHA_MAX)]),
            c,
        }
    }

    pub fn delta(&self, alpha: f64) -> f64 {
        (1.0 - alpha) * (-(1.0 - alpha).powf(-self.c) + 1.0).exp()
    }
}

impl Model for Ferguson {
    fn name(&self) -> &'static str {
        "ferguson"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let alpha = theta[0];
        let x = x[0];
        if !(-1.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let delta = self.delta(alpha);
        let mut dens = alpha * 0.5;
        if delta > 0.0 {
            let t = (x - alpha) / delta;
            if t.abs() < 1.0 {
                dens += (1.0 - alpha) * (1.0 - t.abs()) / delta;
            }
        }
        dens.ln()
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let alpha = theta[0];
        let delta = self.delta(alpha);
        let data = (0..count)
            .map(|_| {
                if rng.gen_range(0.0..1.0) < alpha {
                    rng.gen_range(-1.0..1.0)
                } else {
                    let t: f64 = rng.gen_range(0.0..1.0) - rng.gen_range(0.0..1.0);
                    alpha + delta * t
                }
            })
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Interval { lo: -1.0, hi: 1.0 }
    }
}

/// The Schwartz uniform-scale family: y ~ U[0,1] at beta = 1, U[0, 2/beta]
/// for 1 < beta < 2.
pub struct Schwartz {
    space: ParamSpace,
}

impl Schwartz {
    pub fn new() -> Self {
        Schwartz {
            space: ParamSpace::new(1, vec!["beta"], vec![(1.0 - 1e-9, 2.0)]),
        }
    }

    pub fn upper(beta: f64) -> f64 {
        if beta <= 1.0 {
            1.0
        } else {
            2.0 / beta
        }
    }
}

impl Default for Schwartz {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for Schwartz {
    fn name(&self) -> &'static str {
        "schwartz"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let hi = Self::upper(theta[0]);
        if x[0] < 0.0 || x[0] > hi {
            f64::NEG_INFINITY
        } else {
            -hi.ln()
        }
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let hi = Self::upper(theta[0]);
        let data = (0..count).map(|_| rng.gen_range(0.0..hi)).collect();
        Sample::from_scalars(data)
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval {
            lo: 0.0,
            hi: Self::upper(theta[0]),
        }
    }
}

/// Three-component scalar Gaussian mixture,
/// theta = (g1, g2, g3, a1, a2, a3, s1, s2, s3); weights are renormalized
/// inside the density so the family stays proper off the simplex.
pub struct Mixture3 {
    space: ParamSpace,
}

impl Mixture3 {
    pub fn new() -> Self {
        Mixture3 {
            space: ParamSpace::new(
                3,
                vec![
                    "gamma1", "gamma2", "gamma3", "alpha1", "alpha2", "alpha3", "sigma1_2",
                    "sigma2_2", "sigma3_2",
                ],
                vec![
                    (0.0, 1.0),
                    (0.0, 1.0),
                    (0.0, 1.0),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (1e-8, f64::INFINITY),
                    (1e-8, f64::INFINITY),
                    (1e-8, f64::INFINITY),
                ],
            ),
        }
    }
}

impl Default for Mixture3 {
    fn default() -> Self {
        Self::new()
    }
}

impl Model for Mixture3 {
    fn name(&self) -> &'static str {
        "mixture3"
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let wsum: f64 = theta[0] + theta[1] + theta[2];
        let mut dens = 0.0;
        for j in 0..3 {
            let w = theta[j] / wsum;
            let mean = theta[3 + j];
            let var = theta[6 + j];
            let u = x[0] - mean;
            dens += w * (-0.5 * (LN_2PI + var.ln()) - u * u / (2.0 * var)).exp();
        }
        dens.ln()
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        let wsum: f64 = theta[0] + theta[1] + theta[2];
        let data = (0..count)
            .map(|_| {
                let u: f64 = rng.gen_range(0.0..wsum);
                let j = if u < theta[0] {
                    0
                } else if u < theta[0] + theta[1] {
                    1
                } else {
                    2
                };
                theta[3 + j]
                    + theta[6 + j].sqrt()
                        * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            })
            .collect();
        Sample::from_scalars(data)
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Sampled
    }
}

/// Wrapper presenting an inner model with permuted parameter order: outer
/// coordinate j maps to inner coordinate perm[j]. Used to place a different
/// block first in the alpha/beta partition.
pub struct Reordered<M: Model> {
    inner: M,
    perm: Vec<usize>,
    space: ParamSpace,
}

impl<M: Model> Reordered<M> {
    pub fn new(inner: M, perm: Vec<usize>, d1: usize) -> Self {
        let inner_space = inner.space();
        let names: Vec<String> = perm
            .iter()
            .map(|&p| inner_space.names[p].clone())
            .collect();
        let bounds: Vec<(f64, f64)> = perm.iter().map(|&p| inner_space.bounds[p]).collect();
        let space = ParamSpace { d1, names, bounds };
        Reordered { inner, perm, space }
    }

    fn to_inner(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; theta.len()];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = theta[j];
        }
        out
    }

    fn index_to_inner(&self, i: &MultiIndex) -> MultiIndex {
        let mut out = vec![0usize; i.dim()];
        for (j, &p) in self.perm.iter().enumerate() {
            out[p] = i.0[j];
        }
        MultiIndex::new(out)
    }
}

impl<M: Model> Model for Reordered<M> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn space(&self) -> &ParamSpace {
        &self.space
    }
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.inner.log_density(x, &self.to_inner(theta))
    }
    fn log_density_deriv(&self, x: &[f64], theta: &[f64], i: &MultiIndex) -> f64 {
        self.inner
            .log_density_deriv(x, &self.to_inner(theta), &self.index_to_inner(i))
    }
    fn expectation(&self, theta: &[f64], i: &MultiIndex) -> Option<f64> {
        self.inner
            .expectation(&self.to_inner(theta), &self.index_to_inner(i))
    }
    fn sample(&self, theta: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Sample {
        self.inner.sample(&self.to_inner(theta), count, rng)
    }
    fn support(&self, theta: &[f64]) -> Support {
        self.inner.support(&self.to_inner(theta))
    }
    fn decoupled_hybrid(&self) -> bool {
        self.inner.decoupled_hybrid()
    }
}

/// N(mu, sigma^2) with the variance first: theta = (sigma^2, mu); the
/// variance is the Bayes block.
pub fn gauss2_swapped() -> Reordered<Gauss2> {
    Reordered::new(Gauss2::new(), vec![1, 0], 1)
}

/// Bundled model lookup for the command line front end.
pub fn model_by_name(name: &str) -> Option<Box<dyn Model>> {
    Some(match name {
        "gauss1" => Box::new(Gauss1::new(1.0)),
        "gauss2" => Box::new(Gauss2::new()),
        "mvn" => Box::new(Mvn::new(2)),
        "exprate" => Box::new(ExpRate::new()),
        "poisson" => Box::new(Poisson::new()),
        "prodexp" => Box::new(ProdExp::new(2)),
        "bvnormal" => Box::new(BvNormal::new()),
        "bvalpha" => Box::new(BvAlpha::new(0.0, 0.0)),
        "ferguson" => Box::new(Ferguson::new(3.0)),
        "schwartz" => Box::new(Schwartz::new()),
        "mixture3" => Box::new(Mixture3::new()),
        _ => return None,
    })
}
