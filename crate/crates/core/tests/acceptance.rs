//! End-to-end acceptance checks. Each test prints exactly one pass/fail line
//! for its criterion (visible with `--nocapture`) and enforces the runtime
//! budget alongside the numerical gates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hybrid_infer::bias_lab::{eab_bayes, eab_hybrid, eab_mle, limit_simulation_oracle};
use hybrid_infer::estimators::{
    hybrid_estimate, mixture_hybrid_em, mixture_hybrid_em_with_trace, mvn_hybrid_closed_form,
    schwartz_estimators, LogPrior, LossSpec, OptimizerConfig,
};
use hybrid_infer::expansion_engine::{
    bayes_terms, hybrid_terms, map_terms, mle_terms, PriorDerivatives,
};
use hybrid_infer::gauss_moments::{gaussian_moment, CovarianceMatrix, LossExponents};
use hybrid_infer::index_algebra::MultiIndex;
use hybrid_infer::model_kit::models::{ExpRate, Gauss1, Gauss2, Mixture3, Mvn, Poisson};
use hybrid_infer::model_kit::{empirical_stats, fisher_information, Model, Sample};
use hybrid_infer::numerics::gauss_hermite;
use hybrid_infer::prior_forge::{
    drift_field, example1_premise_check, jeffreys_log_prior, solve_prior,
};
use hybrid_infer::sim_bench::{run_consistency, run_table1, SimConfig, TABLE1_THETA0};

fn criterion(id: u32, name: &str, budget_secs: f64, body: impl FnOnce() -> Result<(), String>) {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => {
            if elapsed > budget_secs {
                println!("criterion {id:02} {name}: FAIL ({elapsed:.1}s over {budget_secs:.0}s budget)");
                panic!("criterion {id} exceeded its runtime budget: {elapsed:.1}s");
            }
            println!("criterion {id:02} {name}: pass ({elapsed:.1}s)");
        }
        Err(msg) => {
            println!("criterion {id:02} {name}: FAIL ({elapsed:.1}s) - {msg}");
            panic!("criterion {id} failed: {msg}");
        }
    }
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> CovarianceMatrix {
    let m = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let spd = &m * m.transpose() + DMatrix::identity(d, d) * 0.2;
    CovarianceMatrix::new(spd).unwrap()
}

fn draw(model: &dyn Model, theta: &[f64], n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.sample(theta, n, &mut rng)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[test]
fn criterion_01_moment_identities() {
    criterion(1, "moment identities", 1.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for rep in 0..20 {
            let sig = random_spd(3, &mut rng);
            let s = sig.matrix();
            let cases = [
                (vec![4, 0, 0], 3.0 * s[(0, 0)] * s[(0, 0)]),
                (vec![3, 1, 0], 3.0 * s[(0, 0)] * s[(0, 1)]),
                (
                    vec![2, 2, 0],
                    s[(0, 0)] * s[(1, 1)] + 2.0 * s[(0, 1)] * s[(0, 1)],
                ),
                (
                    vec![2, 1, 1],
                    s[(0, 0)] * s[(1, 2)] + 2.0 * s[(0, 1)] * s[(0, 2)],
                ),
            ];
            for (a, formula) in cases {
                let got = gaussian_moment(&MultiIndex::new(a.clone()), &sig)
                    .map_err(|e| e.to_string())?;
                let rel = (got - formula).abs() / formula.abs();
                if rel >= 1e-12 {
                    return Err(format!(
                        "rep {rep}, index {a:?}: {got} vs {formula} (rel {rel:.2e})"
                    ));
                }
            }
        }
        Ok(())
    });
}

/// Tensorized Gauss-Hermite evaluation of E prod theta_k^{a_k} under
/// N(0, Sigma): an oracle independent of the pairing enumeration.
fn moment_by_quadrature(a: &[usize], sigma: &CovarianceMatrix) -> f64 {
    let d = sigma.dim();
    let l = sigma.matrix().clone().cholesky().expect("SPD").l();
    let (nodes, weights) = gauss_hermite(40);
    let m = nodes.len();
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    loop {
        let mut w = 1.0;
        let mut x = vec![0.0; d];
        for k in 0..d {
            w *= weights[idx[k]] / std::f64::consts::PI.sqrt();
        }
        for r in 0..d {
            for c in 0..d {
                x[r] += l[(r, c)] * std::f64::consts::SQRT_2 * nodes[idx[c]];
            }
        }
        let mut val = 1.0;
        for k in 0..d {
            val *= x[k].powi(a[k] as i32);
        }
        total += w * val;
        let mut carry = true;
        for slot in idx.iter_mut() {
            if carry {
                *slot += 1;
                if *slot == m {
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
    total
}

#[test]
fn criterion_02_quadrature_oracle() {
    criterion(2, "quadrature oracle", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for d in 1..=3usize {
            for rep in 0..20 {
                let sig = random_spd(d, &mut rng);
                let a: Vec<usize> = loop {
                    let cand: Vec<usize> = (0..d).map(|_| rng.gen_range(0..=6usize)).collect();
                    if cand.iter().sum::<usize>() <= 6 {
                        break cand;
                    }
                };
                let formula =
                    gaussian_moment(&MultiIndex::new(a.clone()), &sig).map_err(|e| e.to_string())?;
                let quad = moment_by_quadrature(&a, &sig);
                let ok = if formula.abs() > 1e-9 {
                    ((formula - quad) / formula).abs() < 1e-8
                } else {
                    quad.abs() < 1e-8
                };
                if !ok {
                    return Err(format!(
                        "d={d} rep {rep} index {a:?}: formula {formula} vs quadrature {quad}"
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_03_matching_prior_mean_variance() {
    criterion(3, "matching prior, mean-variance model", 5.0, || {
        let model = Gauss2::new();
        let field = drift_field(&model, LossExponents::squared(2)).map_err(|e| e.to_string())?;
        let mut grid = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let mu = -0.9 + 0.2 * i as f64;
                let s2 = 0.6 + 0.2 * j as f64;
                grid.push(vec![mu, s2]);
            }
        }
        for point in &grid {
            let b = field.eval(point).map_err(|e| e.to_string())?;
            let want = -2.5 / point[1];
            if b[0].abs() >= 1e-10 || (b[1] - want).abs() >= 1e-10 {
                return Err(format!(
                    "drift at {point:?}: ({}, {}) expected (0, {want})",
                    b[0], b[1]
                ));
            }
        }
        let solution =
            solve_prior(&field, vec![0.0, 1.0], &grid, 1e-6).map_err(|e| e.to_string())?;
        let h = 1e-4;
        for point in grid.iter().step_by(4) {
            let up = solution
                .logpi(&[point[0], point[1] + h])
                .map_err(|e| e.to_string())?;
            let down = solution
                .logpi(&[point[0], point[1] - h])
                .map_err(|e| e.to_string())?;
            let slope = (up - down) / (2.0 * h);
            let want = -2.5 / point[1];
            if (slope - want).abs() >= 1e-5 {
                return Err(format!(
                    "matching prior slope at {point:?}: {slope} expected {want}"
                ));
            }
            let jup = jeffreys_log_prior(&model, &[point[0], point[1] + h])
                .map_err(|e| e.to_string())?;
            let jdown = jeffreys_log_prior(&model, &[point[0], point[1] - h])
                .map_err(|e| e.to_string())?;
            let jslope = (jup - jdown) / (2.0 * h);
            let jwant = -1.5 / point[1];
            if (jslope - jwant).abs() >= 1e-5 {
                return Err(format!(
                    "Jeffreys slope at {point:?}: {jslope} expected {jwant}"
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_04_jeffreys_shortcut() {
    criterion(4, "Jeffreys shortcut premise", 5.0, || {
        let exprate = ExpRate::new();
        let grid: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5 + 0.1 * i as f64]).collect();
        let report = example1_premise_check(&exprate, &grid, 1e-4).map_err(|e| e.to_string())?;
        if !report.holds {
            return Err(format!(
                "exponential-rate premise failed: max relative gap {:.2e}",
                report.max_rel_gap
            ));
        }
        let gap = report.jeffreys_gap.unwrap_or(f64::INFINITY);
        if gap >= 1e-6 {
            return Err(format!(
                "matching prior vs Jeffreys gap {gap:.2e} exceeds 1e-6"
            ));
        }
        let poisson = Poisson::new();
        let pgrid: Vec<Vec<f64>> = (0..5).map(|i| vec![0.6 + 0.35 * i as f64]).collect();
        let preport = example1_premise_check(&poisson, &pgrid, 1e-4).map_err(|e| e.to_string())?;
        if preport.holds {
            return Err("Poisson premise unexpectedly passed".into());
        }
        if (preport.worst_ratio - 2.0).abs() >= 0.02 {
            return Err(format!(
                "Poisson counterexample ratio {} not within 0.02 of 2",
                preport.worst_ratio
            ));
        }
        Ok(())
    });
}

#[test]
fn criterion_05_remainder_scaling() {
    criterion(5, "expansion remainder scaling", 120.0, || {
        // For this model the maximum likelihood expansion terminates after
        // two terms (the remainder is float noise), so the scaling check uses
        // the posterior mode under an informative prior, whose third-order
        // term is nonzero.
        let model = Gauss2::new();
        let theta0 = [0.3, 1.2];
        let prior_means = [0.5, 1.5];
        let prior_vars = [0.5, 0.7];
        let precisions: Vec<f64> = prior_vars.iter().map(|v| 1.0 / v).collect();
        let prior_derivs = PriorDerivatives::gaussian(&theta0, &prior_means, &precisions);

        // Posterior mode by full-precision Newton on the closed-form
        // gradient: an oracle independent of the estimator module.
        let map_oracle = |xs: &[f64]| -> [f64; 2] {
            let n = xs.len() as f64;
            let (mut mu, mut s2) = (theta0[0], theta0[1]);
            for _ in 0..200 {
                let s1: f64 = xs.iter().map(|x| x - mu).sum();
                let sq: f64 = xs.iter().map(|x| (x - mu) * (x - mu)).sum();
                let g1 = s1 / s2 - (mu - prior_means[0]) / prior_vars[0];
                let g2 = -n / (2.0 * s2) + sq / (2.0 * s2 * s2) - (s2 - prior_means[1]) / prior_vars[1];
                let h11 = -n / s2 - 1.0 / prior_vars[0];
                let h12 = -s1 / (s2 * s2);
                let h22 = n / (2.0 * s2 * s2) - sq / (s2 * s2 * s2) - 1.0 / prior_vars[1];
                let det = h11 * h22 - h12 * h12;
                let mut dmu = -(h22 * g1 - h12 * g2) / det;
                let mut ds2 = -(h11 * g2 - h12 * g1) / det;
                while s2 + ds2 < 0.05 {
                    dmu *= 0.5;
                    ds2 *= 0.5;
                }
                mu += dmu;
                s2 += ds2;
                if dmu.abs() + ds2.abs() < 1e-14 {
                    break;
                }
            }
            [mu, s2]
        };

        let ns = [100usize, 1000, 10_000];
        let mut medians = Vec::new();
        for (ni, &n) in ns.iter().enumerate() {
            let mut rems = Vec::new();
            for rep in 0..200u64 {
                let sample = draw(&model, &theta0, n, 5000 + 1000 * ni as u64 + rep);
                let map = map_oracle(sample.scalars());
                let stats =
                    empirical_stats(&model, &sample, &theta0, 3).map_err(|e| e.to_string())?;
                let terms = map_terms(&stats, &prior_derivs).map_err(|e| e.to_string())?;
                let sqrt_n = (n as f64).sqrt();
                let scaled = DVector::from_vec(vec![
                    sqrt_n * (map[0] - theta0[0]),
                    sqrt_n * (map[1] - theta0[1]),
                ]);
                let rem = (&scaled - terms.term(0) - terms.term(1) / sqrt_n).norm();
                rems.push(rem);
            }
            medians.push(median(&mut rems));
        }
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        if !(-1.6..=-0.6).contains(&slope) {
            return Err(format!(
                "remainder slope {slope:.3} outside [-1.6, -0.6]; medians {medians:?}"
            ));
        }

        // The leading term must not depend on the estimator kind, bit for bit.
        let sample = draw(&model, &theta0, 500, 4321);
        let stats = empirical_stats(&model, &sample, &theta0, 3).map_err(|e| e.to_string())?;
        let t_mle = mle_terms(&stats).map_err(|e| e.to_string())?;
        let flat2 = PriorDerivatives::flat(2);
        let t_map = map_terms(&stats, &flat2).map_err(|e| e.to_string())?;
        let t_bayes = bayes_terms(&stats, &flat2, &LossExponents::squared(2))
            .map_err(|e| e.to_string())?;
        let t_hybrid = hybrid_terms(
            &stats,
            &PriorDerivatives::flat(1),
            &LossExponents::squared(1),
        )
        .map_err(|e| e.to_string())?;
        for other in [&t_map, &t_bayes, &t_hybrid] {
            let same = t_mle
                .term(0)
                .iter()
                .zip(other.term(0).iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(format!(
                    "leading terms differ across kinds: {:?} vs {:?}",
                    t_mle.term(0),
                    other.term(0)
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_06_excess_bias_structure_and_oracle() {
    criterion(6, "excess asymptotic bias", 120.0, || {
        // Reference fixtures from the closed forms.
        let g2 = Gauss2::new();
        let s0 = 1.3;
        let eab2 = eab_mle(&g2, &[0.0, s0]).map_err(|e| e.to_string())?;
        if eab2[0].abs() >= 1e-10 || (eab2[1] + s0).abs() >= 1e-10 {
            return Err(format!("mean-variance fixture: {:?} expected (0, {})", eab2, -s0));
        }
        let g1 = Gauss1::new(1.0);
        let eab1 = eab_mle(&g1, &[0.5]).map_err(|e| e.to_string())?;
        if eab1[0].abs() >= 1e-12 {
            return Err(format!("location fixture: {} expected 0", eab1[0]));
        }

        // Additive structure: the prior enters through I^{-1} rho_0 only.
        let theta = [0.2, 1.3];
        let fisher = fisher_information(&g2, &theta).map_err(|e| e.to_string())?;
        let loss2 = LossExponents::squared(2);
        let flat2 = PriorDerivatives::flat(2);
        let prior2 = PriorDerivatives::gaussian(&theta, &[0.5, 1.0], &[2.0, 0.7]);
        let lhs = eab_bayes(&g2, &theta, &prior2, &loss2).map_err(|e| e.to_string())?
            - eab_bayes(&g2, &theta, &flat2, &loss2).map_err(|e| e.to_string())?;
        let rhs = &fisher.i_inv * prior2.rho0();
        if (lhs - &rhs).norm() >= 1e-10 {
            return Err("Bayes additive prior structure violated".into());
        }
        let loss1 = LossExponents::squared(1);
        let flat1 = PriorDerivatives::flat(1);
        let prior1 = PriorDerivatives::gaussian(&theta[..1], &[0.5], &[2.0]);
        let lhs_h = eab_hybrid(&g2, &theta, &prior1, &loss1).map_err(|e| e.to_string())?
            - eab_hybrid(&g2, &theta, &flat1, &loss1).map_err(|e| e.to_string())?;
        let rho1 = prior1.rho0();
        let rhs_h = DVector::from_vec(vec![
            (fisher.inv_block(1, 1) * &rho1)[0],
            (fisher.inv_block(2, 1) * &rho1)[0],
        ]);
        if (lhs_h - rhs_h).norm() >= 1e-10 {
            return Err("hybrid additive prior structure violated".into());
        }

        // Limit-simulation oracle, mandatory for the exact-zero location case.
        let oracle1 = limit_simulation_oracle(&g1, &[0.5], 1_000_000, 606)
            .map_err(|e| e.to_string())?;
        if oracle1.max_z(&eab1) >= 4.0 {
            return Err(format!(
                "location oracle disagrees: z = {:.2}",
                oracle1.max_z(&eab1)
            ));
        }
        // Full mean-variance case: the oracle must agree with the formula.
        let oracle2 = limit_simulation_oracle(&g2, &[0.0, s0], 1_000_000, 607)
            .map_err(|e| e.to_string())?;
        let z = oracle2.max_z(&eab2);
        if z >= 4.0 {
            return Err(format!("mean-variance oracle disagrees with formula: z = {z:.2}"));
        }
        // The alternate published reference value is decisively rejected by
        // the same simulation; surfaced here, not gated.
        let alt = DVector::from_vec(vec![0.0, -2.0 * s0 + s0.powi(3) + 16.0 * s0.powi(5)]);
        let alt_z = oracle2.max_z(&alt);
        println!(
            "  note: alternate variance-bias reference value rejected by the oracle (z = {alt_z:.0})"
        );
        Ok(())
    });
}

#[test]
fn criterion_07_mvn_hybrid_closed_form() {
    criterion(7, "multivariate normal hybrid closed form", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for rep in 0..12 {
            let p = 1 + rep % 3;
            let n = rng.gen_range(p + 2..=50);
            let model = Mvn::new(p);
            let mu: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-0.7..0.7));
            let cov = &a * a.transpose() + DMatrix::identity(p, p) * 0.3;
            let theta = model.pack(&mu, &cov);
            let sample = draw(&model, &theta, n, 7000 + rep as u64);
            let mu1: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let (mu_c, om_c) = mvn_hybrid_closed_form(&sample, &mu1).map_err(|e| e.to_string())?;

            // Independent re-derivation of the joint stationary point.
            let nf = n as f64;
            let mut xbar = DVector::zeros(p);
            for i in 0..n {
                xbar += DVector::from_column_slice(sample.row(i));
            }
            xbar /= nf;
            let mu_want = (&xbar * nf + DVector::from_column_slice(&mu1)) / (nf + 1.0);
            let mut om_want = DMatrix::zeros(p, p);
            for i in 0..n {
                let dvec = DVector::from_column_slice(sample.row(i)) - &mu_want;
                om_want += &dvec * dvec.transpose();
            }
            let pdiff = DVector::from_column_slice(&mu1) - &mu_want;
            om_want += &pdiff * pdiff.transpose();
            om_want /= nf + 1.0;
            if (&mu_c - &mu_want).norm() >= 1e-10 || (&om_c - &om_want).norm() >= 1e-10 {
                return Err(format!("closed form mismatch at rep {rep} (p = {p}, n = {n})"));
            }
        }

        // Block-coordinate optimizer reaches the closed form.
        for p in 1..=2usize {
            let model = Mvn::new(p);
            let mu: Vec<f64> = (0..p).map(|j| 0.3 - 0.5 * j as f64).collect();
            let cov = DMatrix::identity(p, p) * 0.9
                + DMatrix::from_element(p, p, if p > 1 { 0.25 } else { 0.0 });
            let theta = model.pack(&mu, &cov);
            let sample = draw(&model, &theta, 9, 7100 + p as u64);
            let mu1 = vec![0.0; p];
            let (mu_c, om_c) = mvn_hybrid_closed_form(&sample, &mu1).map_err(|e| e.to_string())?;
            let prior = LogPrior::mvn_conjugate(p, mu1);
            let init = model.pack(&vec![0.0; p], &DMatrix::identity(p, p));
            let cfg = OptimizerConfig::default();
            let res = hybrid_estimate(
                &model,
                &sample,
                &prior,
                &LossSpec::ZeroOne(0.5),
                &init,
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            if !res.converged {
                return Err(format!("optimizer did not converge at p = {p}"));
            }
            let target = model.pack(mu_c.as_slice(), &om_c);
            let got: Vec<f64> = res
                .alpha_hat
                .iter()
                .chain(res.beta_hat.iter())
                .copied()
                .collect();
            for (j, (g, t)) in got.iter().zip(&target).enumerate() {
                if (g - t).abs() >= 1e-6 {
                    return Err(format!(
                        "optimizer coordinate {j} at p = {p}: {g} vs closed form {t}"
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_08_mixture_em() {
    criterion(8, "mixture EM monotonicity", 30.0, || {
        let model = Mixture3::new();
        let priors = [(-0.85, 0.1), (0.22, 0.1), (1.35, 0.1)];
        let init = [0.3, 0.3, 0.4, -1.0, 0.1, 1.2, 0.5, 0.3, 0.9];
        for seed in 0..50u64 {
            let sample = draw(&model, &TABLE1_THETA0, 150, 8800 + seed);
            let cfg = OptimizerConfig::with_seed(seed);
            let (res, trace) = mixture_hybrid_em_with_trace(&sample, 3, &priors, &init, &cfg)
                .map_err(|e| e.to_string())?;
            if res
                .diagnostics
                .flags
                .iter()
                .any(|f| f == "em_objective_decreased")
            {
                return Err(format!("seed {seed}: objective decrease flagged"));
            }
            for w in trace.windows(2) {
                if w[1] < w[0] - 1e-9 * (1.0 + w[0].abs()) {
                    return Err(format!("seed {seed}: objective fell {} -> {}", w[0], w[1]));
                }
            }
        }

        // k = 1 single step is the normal-normal conjugate update.
        let g = Gauss1::new(0.64);
        let sample = draw(&g, &[0.4], 20, 8);
        let n = sample.n as f64;
        let xbar = sample.scalars().iter().sum::<f64>() / n;
        let (a0, tau2, s) = (0.1, 0.5, 0.64);
        let closed = (n * xbar / s + a0 / tau2) / (n / s + 1.0 / tau2);
        let cfg = OptimizerConfig {
            max_iter: 1,
            restarts: 0,
            ..OptimizerConfig::default()
        };
        let res = mixture_hybrid_em(&sample, 1, &[(a0, tau2)], &[1.0, 0.0, s], &cfg)
            .map_err(|e| e.to_string())?;
        if (res.alpha_hat[0] - closed).abs() >= 1e-10 {
            return Err(format!(
                "conjugate one-step: {} vs closed form {closed}",
                res.alpha_hat[0]
            ));
        }
        Ok(())
    });
}

struct PaperRow {
    estimator: &'static str,
    n: usize,
    mean: [f64; 9],
    sd: [f64; 9],
    gated: bool,
}

const PAPER_ROWS: &[PaperRow] = &[
    PaperRow {
        estimator: "mle",
        n: 300,
        mean: [0.201, 0.531, 0.267, -0.905, 0.239, 1.371, 0.454, 0.169, 1.049],
        sd: [0.107, 0.069, 0.090, 0.027, 0.076, 0.022, 0.132, 0.204, 0.062],
        gated: true,
    },
    PaperRow {
        estimator: "bayes",
        n: 300,
        mean: [0.173, 0.563, 0.264, -1.005, 0.232, 1.362, 0.440, 0.198, 1.181],
        sd: [0.115, 0.068, 0.089, 0.024, 0.072, 0.020, 0.141, 0.170, 0.050],
        gated: false,
    },
    PaperRow {
        estimator: "hybrid",
        n: 300,
        mean: [0.201, 0.531, 0.268, -0.900, 0.237, 1.373, 0.447, 0.167, 1.021],
        sd: [0.108, 0.069, 0.090, 0.028, 0.077, 0.022, 0.140, 0.209, 0.065],
        gated: true,
    },
    PaperRow {
        estimator: "mle",
        n: 1000,
        mean: [0.201, 0.533, 0.266, -0.797, 0.227, 1.323, 0.420, 0.202, 0.824],
        sd: [0.055, 0.037, 0.049, 0.017, 0.037, 0.014, 0.095, 0.089, 0.042],
        gated: true,
    },
    PaperRow {
        estimator: "bayes",
        n: 1000,
        mean: [0.185, 0.556, 0.259, -0.885, 0.215, 1.314, 0.405, 0.220, 0.883],
        sd: [0.059, 0.036, 0.050, 0.016, 0.038, 0.013, 0.104, 0.080, 0.037],
        gated: false,
    },
    PaperRow {
        estimator: "hybrid",
        n: 1000,
        mean: [0.202, 0.531, 0.267, -0.801, 0.227, 1.326, 0.416, 0.199, 0.811],
        sd: [0.055, 0.037, 0.049, 0.017, 0.038, 0.014, 0.097, 0.091, 0.043],
        gated: true,
    },
];

#[test]
fn criterion_09_reference_table_reproduction() {
    criterion(9, "reference table reproduction", 1800.0, || {
        let mut cfg = SimConfig::table1(2026);
        cfg.n = vec![300, 1000];
        cfg.reps = Some(100);
        let report = run_table1(&cfg).map_err(|e| e.to_string())?;
        let mut failures = Vec::new();
        let mut bayes_outside = Vec::new();
        for row in PAPER_ROWS {
            for (p, param) in report.param_names.iter().enumerate() {
                let ours = report
                    .summaries
                    .iter()
                    .find(|s| s.estimator == row.estimator && s.n == row.n && &s.param == param)
                    .ok_or_else(|| format!("missing summary for {} n={}", row.estimator, row.n))?;
                let tol = 4.0 * row.sd[p] / 10.0 + 0.02;
                let diff = (ours.mean - row.mean[p]).abs();
                if diff > tol {
                    let entry = format!(
                        "{} n={} {}: ours {:.3} vs reference {:.3} (tol {:.3})",
                        row.estimator, row.n, param, ours.mean, row.mean[p], tol
                    );
                    if row.gated {
                        failures.push(entry);
                    } else {
                        bayes_outside.push(entry);
                    }
                }
            }
        }
        if !bayes_outside.is_empty() {
            // The full-Bayes row may instead carry MCMC diagnostics flags.
            let flagged = !report.flags.is_empty()
                || report
                    .failures
                    .iter()
                    .any(|f| f.estimator == "bayes" && f.flagged);
            println!(
                "  note: full-Bayes coordinates outside tolerance: {} ({}via diagnostics flags)",
                bayes_outside.len(),
                if flagged { "surfaced " } else { "not " }
            );
            for line in &bayes_outside {
                println!("    {line}");
            }
            if !flagged {
                failures.push(format!(
                    "full-Bayes outside tolerance without diagnostics flags: {}",
                    bayes_outside.join("; ")
                ));
            }
        }
        if !failures.is_empty() {
            return Err(failures.join("; "));
        }
        Ok(())
    });
}

#[test]
fn criterion_10_counterexample_behavior() {
    criterion(10, "counterexample model behavior", 600.0, || {
        // Uniform-scale closed forms, exact.
        let (mle, bayes) = schwartz_estimators(&Sample::from_scalars(vec![0.2, 0.5, 0.9]))
            .map_err(|e| e.to_string())?;
        if (mle - 1.0).abs() >= 1e-12 || (bayes - 124.0 / 75.0).abs() >= 1e-12 {
            return Err(format!("scale fixture: ({mle}, {bayes}) vs (1, 124/75)"));
        }
        let (mle2, bayes2) = schwartz_estimators(&Sample::from_scalars(vec![1.6]))
            .map_err(|e| e.to_string())?;
        let b = 2.0 / 1.6f64;
        let want2 = (2.0 / 3.0) * b * (1.0 - b.powi(-3)) / (1.0 - b.powi(-2));
        if (mle2 - 1.25).abs() >= 1e-12 || (bayes2 - want2).abs() >= 1e-12 {
            return Err(format!("scale fixture above 1: ({mle2}, {bayes2})"));
        }
        // Limit behavior at the worst-case boundary: the posterior mean under
        // a flat prior converges to 2 with the geometric gap bounded by
        // 4 * 2^{-n} around the rational factor 2(n+1)/(n+2).
        for n in 5..=60u32 {
            let nf = n as f64;
            let q = 2f64.powi(-(n as i32) - 1);
            let beta_bar = (nf + 1.0) / (nf + 2.0) * (2.0 - q) / (1.0 - q);
            let anchor = 2.0 * (nf + 1.0) / (nf + 2.0);
            if (beta_bar - anchor).abs() >= 4.0 * 2f64.powi(-(n as i32)) {
                return Err(format!("limit gap bound violated at n = {n}"));
            }
            if (beta_bar - 2.0).abs() >= 3.0 / (nf + 2.0) {
                return Err(format!("polynomial limit bound violated at n = {n}"));
            }
        }

        // Consistency sweep: 50 seeds per n.
        let mut cfg = SimConfig::consistency(3030);
        cfg.n = vec![200, 1000, 5000];
        cfg.reps = Some(50);
        let report = run_consistency(&cfg).map_err(|e| e.to_string())?;
        // Spiked-mixture MLE drifts toward 1 whatever the truth.
        let mut prev_median = f64::NEG_INFINITY;
        let mut last_median = 0.0;
        for &n in &cfg.n {
            let mut alphas: Vec<f64> = report
                .raw
                .iter()
                .filter(|r| r.estimator == "full_mle" && r.n == n)
                .map(|r| r.values[0])
                .collect();
            if alphas.len() != 50 {
                return Err(format!("expected 50 reps at n = {n}, got {}", alphas.len()));
            }
            let med = median(&mut alphas);
            if med < prev_median - 1e-12 {
                return Err(format!(
                    "spiked-mixture median MLE decreased at n = {n}: {med} < {prev_median}"
                ));
            }
            prev_median = med;
            last_median = med;
        }
        if last_median <= 0.9 {
            return Err(format!(
                "spiked-mixture median MLE at n = 5000 is {last_median}, expected > 0.9"
            ));
        }
        // The hybrid pairing is consistent in both coordinates.
        for coord in 0..2usize {
            let truth = cfg.theta0[coord];
            let mut prev = f64::INFINITY;
            for &n in &cfg.n {
                let mut errs: Vec<f64> = report
                    .raw
                    .iter()
                    .filter(|r| r.estimator == "hybrid" && r.n == n)
                    .map(|r| (r.values[coord] - truth).abs())
                    .collect();
                let med = median(&mut errs);
                if med > prev + 1e-12 {
                    return Err(format!(
                        "hybrid median error increased in coordinate {coord} at n = {n}: {med} > {prev}"
                    ));
                }
                prev = med;
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_11_determinism() {
    criterion(11, "determinism", 60.0, || {
        let mut cfg = SimConfig::table1(99);
        cfg.n = vec![60];
        cfg.reps = Some(2);
        let r1 = run_table1(&cfg).map_err(|e| e.to_string())?;
        let r2 = run_table1(&cfg).map_err(|e| e.to_string())?;
        let s1 = serde_json::to_string(&r1).unwrap();
        if s1 != serde_json::to_string(&r2).unwrap() {
            return Err("re-run with the same config differs".into());
        }
        for threads in [1usize, 3] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            let r = pool.install(|| run_table1(&cfg)).map_err(|e| e.to_string())?;
            if serde_json::to_string(&r).unwrap() != s1 {
                return Err(format!("report differs under {threads} threads"));
            }
        }
        // Same guarantee through the command line surface.
        let dir = std::env::temp_dir().join("hybrid_infer_acceptance");
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let out = dir.join("det.json");
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let code = hybrid_infer::cli::parse_and_dispatch([
                "hybrid-infer",
                "simulate",
                "table1",
                "--n",
                "60",
                "--reps",
                "2",
                "--seed",
                "99",
                "--out",
                out.to_str().unwrap(),
            ]);
            if code != 0 {
                return Err(format!("cli exit code {code}"));
            }
            bytes.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        if bytes[0] != bytes[1] {
            return Err("cli reports differ across identical runs".into());
        }
        Ok(())
    });
}
