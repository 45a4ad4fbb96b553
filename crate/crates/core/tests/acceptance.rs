//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::time::{Duration, Instant};

use common::{binomial_slack, history, random_feature, random_linear_spec, rff_setup};
use mmucb::bandit::{bound_holds, coverage_fraction, run_batch, Policy, RunConfig};
use mmucb::oracle::{mc_radius_sq, UcbProgram};
use mmucb::studies::{width_grid, ProblemSettings};
use mmucb::{
    exact_lcb, exact_ucb, mixture_dense, radius_amm, radius_mm_naive, radius_oful, ConfidenceParams, DualSearchConfig,
    EfficientRadius, GramState, KernelFunction, MeanFunction, MixtureSpec, MixtureState, SeededRng, UcbQuery,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> mmucb::Result<Outcome>;

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, u64, Check); 9] = [
        (1, "strict radius ordering", 10, radius_ordering),
        (2, "duality exactness", 120, duality_exactness),
        (3, "radius equivalence", 30, radius_equivalence),
        (4, "Gaussian-integral oracle", 120, gaussian_integral),
        (5, "time-uniform coverage", 300, coverage),
        (6, "regret-bound validity", 600, regret_bound_validity),
        (7, "width and regret ordering", 1200, width_and_regret_ordering),
        (8, "incremental linear algebra", 10, incremental_algebra),
        (9, "property suites", 60, property_suites),
    ];
    let mut failures = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = outcome.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {id}. {name}: {} ({:.1} s, limit {limit} s{})",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn radius_ordering() -> mmucb::Result<Outcome> {
    let params = ConfidenceParams::new(1.0, 1.0, 0.01)?;
    let gram = GramState::new(3, 1.0, params)?;
    let r0 = EfficientRadius::new(&MixtureSpec::standard(1.0, 1.0)?, 3, params)?.radius_sq();
    let amm0 = radius_amm(&gram, r0)?;
    let oful0 = radius_oful(&gram);
    let closed_ok = (amm0 - 3.19536).abs() < 1e-5 && (oful0 - 4.03486).abs() < 1e-5;

    let results: Vec<(usize, usize, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|i| -> mmucb::Result<(usize, usize, f64)> {
            let mut rng = SeededRng::derive(1, i);
            let d = 1 + rng.index(20);
            let t = rng.index(201);
            let c = rng.uniform_in(0.2, 5.0);
            let sigma = rng.uniform_in(0.05, 2.0);
            let b = rng.uniform_in(0.5, 20.0);
            let params = ConfidenceParams::new(sigma, b, rng.uniform_in(1e-3, 0.5))?;
            let h = history(&mut rng, d, t, sigma, b);
            let mut gram = GramState::new(d, sigma * sigma / c, params)?;
            let mut radius = EfficientRadius::new(&MixtureSpec::standard(c, sigma)?, d, params)?;
            let (mut steps, mut violations, mut worst) = (0, 0, 0f64);
            for step in 0..=t {
                if step > 0 {
                    gram.update(&h.features[step - 1], h.rewards[step - 1])?;
                    radius.update(&h.features[step - 1], h.rewards[step - 1])?;
                }
                let ratio = radius_amm(&gram, radius.radius_sq())? / radius_oful(&gram);
                steps += 1;
                if !(ratio < 1.0) {
                    violations += 1;
                }
                worst = worst.max(ratio);
            }
            Ok((steps, violations, worst))
        })
        .collect::<mmucb::Result<_>>()?;
    let steps: usize = results.iter().map(|r| r.0).sum();
    let violations: usize = results.iter().map(|r| r.1).sum();
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(Outcome {
        pass: closed_ok && violations == 0,
        detail: format!(
            "t=0 R_AMM {amm0:.6} R_OFUL {oful0:.6}; {violations} violations in {steps} steps over 1000 histories, \
             max R_AMM/R_OFUL {worst:.6}"
        ),
    })
}

fn duality_exactness() -> mmucb::Result<Outcome> {
    let cfg = DualSearchConfig::default();
    let errors: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|i| -> mmucb::Result<f64> {
            // Redraw until the confidence set is non-empty; the oracle needs an interior point.
            for attempt in 0.. {
                let mut rng = SeededRng::derive(2, (i << 16) | attempt);
                let d = 1 + rng.index(3);
                let t = rng.index(11);
                let sigma = rng.uniform_in(0.1, 1.0);
                let b = rng.uniform_in(0.5, 3.0);
                let params = ConfidenceParams::new(sigma, b, rng.uniform_in(0.01, 0.3))?;
                let h = history(&mut rng, d, t, sigma, b);
                let spec = if i % 2 == 0 {
                    MixtureSpec::standard(rng.uniform_in(0.2, 3.0), sigma)?
                } else {
                    random_linear_spec(&mut rng, d, sigma)?
                };
                let mut gram = GramState::new(d, rng.uniform_in(0.05, 2.0), params)?;
                for (phi, r) in h.features.iter().zip(&h.rewards) {
                    gram.update(phi, *r)?;
                }
                let state = mixture_dense(&spec, &h.features, &h.rewards)?;
                let r_mm_sq = radius_mm_naive(state.mean(), &state.covariance(), &h.rewards, &params)?;
                let program = UcbProgram::from_state(&gram, r_mm_sq, b);
                if program.interior_point().is_none() {
                    continue;
                }
                let phi = random_feature(&mut rng, d, 1.0);
                let neg: Vec<f64> = phi.iter().map(|x| -x).collect();
                let (Some(up), Some(down)) = (program.solve(&phi, 1e-10)?, program.solve(&neg, 1e-10)?) else {
                    continue;
                };
                let q = UcbQuery::new(&phi, &gram, r_mm_sq, b)?;
                let ucb = exact_ucb(&q, &cfg)?.value;
                let lcb = exact_lcb(&q, &cfg)?.value;
                return Ok(rel_err(ucb, up).max(rel_err(lcb, -down)));
            }
            unreachable!()
        })
        .collect::<mmucb::Result<_>>()?;
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        pass: worst <= 1e-4,
        detail: format!("200 instances, worst relative error of UCB/LCB vs interior-point oracle {worst:.2e} (tol 1e-4)"),
    })
}

fn radius_equivalence() -> mmucb::Result<Outcome> {
    let errors: Vec<f64> = (0..500u64)
        .into_par_iter()
        .map(|i| -> mmucb::Result<f64> {
            let mut rng = SeededRng::derive(3, i);
            let d = 1 + rng.index(12);
            let t = 1 + rng.index(60);
            let sigma = rng.uniform_in(0.1, 2.0);
            let b = rng.uniform_in(0.5, 10.0);
            let params = ConfidenceParams::new(sigma, b, rng.uniform_in(1e-3, 0.5))?;
            let spec = random_linear_spec(&mut rng, d, sigma)?;
            let h = history(&mut rng, d, t, sigma, b);
            let mut eff = EfficientRadius::new(&spec, d, params)?;
            let mut worst = 0f64;
            for step in 1..=t {
                eff.update(&h.features[step - 1], h.rewards[step - 1])?;
                let state = mixture_dense(&spec, &h.features[..step], &h.rewards[..step])?;
                let naive = radius_mm_naive(state.mean(), &state.covariance(), &h.rewards[..step], &params)?;
                worst = worst.max(rel_err(eff.radius_sq(), naive));
            }
            Ok(worst)
        })
        .collect::<mmucb::Result<_>>()?;
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        pass: worst <= 1e-8,
        detail: format!("500 linear-family histories, every prefix, worst relative error {worst:.2e} (tol 1e-8)"),
    })
}

fn gaussian_integral() -> mmucb::Result<Outcome> {
    let z: Vec<(f64, f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|i| -> mmucb::Result<(f64, f64, f64)> {
            let mut rng = SeededRng::derive(4, i);
            let d = 1 + rng.index(3);
            let t = 1 + rng.index(4);
            let sigma = rng.uniform_in(0.5, 1.5);
            let params = ConfidenceParams::new(sigma, 2.0, rng.uniform_in(0.01, 0.3))?;
            let spec = match i % 4 {
                0 => MixtureSpec::standard(rng.uniform_in(0.2, 1.5), sigma)?,
                1 => random_linear_spec(&mut rng, d, sigma)?,
                2 => MixtureSpec::mean_kernel(
                    MeanFunction::Constant(rng.uniform_in(-0.5, 0.5)),
                    KernelFunction::Rbf { lengthscale: rng.uniform_in(0.3, 2.0), variance: rng.uniform_in(0.2, 1.5) },
                    sigma,
                )?,
                _ => MixtureSpec::adaptive(
                    MeanFunction::Zero,
                    KernelFunction::Rbf { lengthscale: rng.uniform_in(0.3, 2.0), variance: rng.uniform_in(0.2, 1.5) },
                    None,
                    sigma,
                )?,
            };
            let h = history(&mut rng, d, t, sigma, 2.0);
            let state = mixture_dense(&spec, &h.features, &h.rewards)?;
            let t_mat = state.covariance();
            let closed = radius_mm_naive(state.mean(), &t_mat, &h.rewards, &params)?;
            let (est, se) = mc_radius_sq(state.mean(), &t_mat, &h.rewards, &params, 1_000_000, &mut rng)?;
            Ok(((closed - est).abs() / se, closed, est))
        })
        .collect::<mmucb::Result<_>>()?;
    let worst = z.iter().map(|x| x.0).fold(0.0, f64::max);
    Ok(Outcome {
        pass: z.iter().all(|x| x.0 <= 3.0),
        detail: format!("20 instances (4 families), 1e6 samples each, worst |closed - MC| = {worst:.2} standard errors (tol 3)"),
    })
}

/// Synthetic bandit used by the coverage and regret-bound criteria.
fn bandit_runs(
    policies: &[Policy],
    runs: u64,
    rounds: usize,
    delta: f64,
    stream: u64,
) -> mmucb::Result<Vec<Vec<mmucb::BanditRun>>> {
    let sigma = 0.1;
    let params = ConfidenceParams::new(sigma, 10.0, delta)?;
    let spec = MixtureSpec::standard(1.0, sigma)?;
    let cfg = RunConfig::new(rounds, params);
    let seeds: Vec<u64> = (0..runs).map(|s| (stream << 32) | s).collect();
    run_batch(policies, &seeds, &spec, &cfg, |seed| rff_setup(seed, 2, 10, 10, sigma, 10.0)?.build(seed))
}

fn coverage() -> mmucb::Result<Outcome> {
    let runs = bandit_runs(&[Policy::Amm { alpha: 0.01 }], 500, 200, 0.05, 5)?;
    let flat: Vec<_> = runs.into_iter().flatten().collect();
    let frac = coverage_fraction(&flat)?;
    let threshold = 0.95 - binomial_slack(0.05, 500);
    Ok(Outcome {
        pass: frac >= threshold,
        detail: format!("500 runs, T=200, delta=0.05: coverage {frac:.3} (threshold {threshold:.4})"),
    })
}

fn regret_bound_validity() -> mmucb::Result<Outcome> {
    let policies = [Policy::Cmm { alpha: 0.01 }, Policy::Amm { alpha: 0.01 }];
    let runs = bandit_runs(&policies, 200, 200, 0.05, 6)?;
    let threshold = 0.95 - binomial_slack(0.05, 200);
    let mut pass = true;
    let mut parts = Vec::new();
    for (j, p) in policies.iter().enumerate() {
        let held = runs.iter().filter(|per_seed| bound_holds(&per_seed[j])).count();
        let frac = held as f64 / runs.len() as f64;
        pass &= frac >= threshold;
        parts.push(format!("{} {frac:.3}", p.name()));
    }
    Ok(Outcome {
        pass,
        detail: format!(
            "200 runs, T=200, delta=0.05: fraction with regret <= bound at every T: {} (threshold {threshold:.4})",
            parts.join(", ")
        ),
    })
}

fn width_and_regret_ordering() -> mmucb::Result<Outcome> {
    let s = ProblemSettings::default();
    let ts = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];
    let ds = [1, 2, 5, 10, 20, 50, 100];
    let mut cells = width_grid(&s, &[10], &ts, 100)?;
    cells.extend(width_grid(&s, &ds, &[100], 100)?);
    let bad = cells.iter().filter(|c| !(c.ordered() && c.cmm <= c.amm && c.amm < c.oful)).count();

    let sigma = 0.1;
    let alpha = sigma * sigma;
    let policies = [Policy::Cmm { alpha }, Policy::Amm { alpha }, Policy::Oful { alpha }];
    let params = ConfidenceParams::new(sigma, 10.0, 0.01)?;
    let spec = MixtureSpec::standard(1.0, sigma)?;
    let seeds: Vec<u64> = (0..100).collect();
    let runs = run_batch(&policies, &seeds, &spec, &RunConfig::new(500, params), |seed| {
        rff_setup(seed ^ 0x7a11, 2, 20, 10, sigma, 10.0)?.build(seed)
    })?;
    let mean: Vec<f64> =
        (0..3).map(|j| runs.iter().map(|r| r[j].cumulative_regret()).sum::<f64>() / runs.len() as f64).collect();
    let regret_ok = mean[0] <= mean[1] && mean[1] <= mean[2];
    Ok(Outcome {
        pass: bad == 0 && regret_ok,
        detail: format!(
            "{} width cells, {bad} out of order; mean regret over 100 seeds (d=20, T=500, 10 arms): \
             cmm {:.3}, amm {:.3}, oful {:.3}",
            cells.len(),
            mean[0],
            mean[1],
            mean[2]
        ),
    })
}

fn incremental_algebra() -> mmucb::Result<Outcome> {
    let d = 50;
    let mut worst_inv = 0f64;
    let mut worst_det = 0f64;
    for (k, &alpha) in [1.0, 0.01].iter().enumerate() {
        let mut rng = SeededRng::derive(8, k as u64);
        let mut gram = GramState::new(d, alpha, ConfidenceParams::new(0.1, 1.0, 0.05)?)?;
        let mut direct = DMatrix::<f64>::identity(d, d) * alpha;
        for step in 1..=1000 {
            let phi = random_feature(&mut rng, d, 1.0);
            gram.update(&phi, rng.normal())?;
            let v = DVector::from_column_slice(&phi);
            direct += &v * v.transpose();
            if step % 50 == 0 || step == 511 {
                let chol = direct.clone().cholesky().expect("A is positive definite");
                let inv = chol.inverse();
                let err = (gram.a_inv() - &inv).amax() / inv.amax();
                let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>() - d as f64 * alpha.ln();
                worst_inv = worst_inv.max(err);
                worst_det = worst_det.max((gram.log_det_ratio() - log_det).exp_m1().abs());
            }
        }
    }
    Ok(Outcome {
        pass: worst_inv <= 1e-8 && worst_det <= 1e-8,
        detail: format!(
            "d=50, 1000 updates, alpha in {{1, 0.01}}: worst inverse error {worst_inv:.2e}, \
             worst determinant-ratio error {worst_det:.2e} (tol 1e-8)"
        ),
    })
}

fn random_adaptive_spec(rng: &mut SeededRng, sigma: f64) -> mmucb::Result<MixtureSpec> {
    let kernel = if rng.uniform() < 0.5 {
        KernelFunction::Rbf { lengthscale: rng.uniform_in(0.2, 3.0), variance: rng.uniform_in(0.1, 5.0) }
    } else {
        KernelFunction::Linear { scale: rng.uniform_in(0.1, 5.0) }
    };
    let beta = if rng.uniform() < 0.5 { None } else { Some(rng.uniform_in(1e-3, 2.0)) };
    MixtureSpec::adaptive(MeanFunction::Constant(rng.uniform_in(-1.0, 1.0)), kernel, beta, sigma)
}

fn bits(state: &MixtureState) -> (Vec<u64>, Vec<u64>) {
    (state.mean().iter().map(|x| x.to_bits()).collect(), state.covariance().iter().map(|x| x.to_bits()).collect())
}

fn property_suites() -> mmucb::Result<Outcome> {
    // Determinant-trace inequality.
    let mut det_trace_bad = 0;
    for i in 0..1000u64 {
        let mut rng = SeededRng::derive(9, i);
        let d = 1 + rng.index(20);
        let alpha = rng.uniform_in(0.01, 10.0);
        let mut gram = GramState::new(d, alpha, ConfidenceParams::new(1.0, 1.0, 0.5)?)?;
        let mut trace = 0.0;
        for _ in 0..1 + rng.index(100) {
            let scale = rng.uniform_in(0.1, 5.0);
            let phi = random_feature(&mut rng, d, scale);
            trace += phi.iter().map(|x| x * x).sum::<f64>();
            gram.update(&phi, 0.0)?;
        }
        let bound = d as f64 * (trace / (d as f64 * alpha)).ln_1p();
        if gram.log_det_ratio() > bound * (1.0 + 1e-12) {
            det_trace_bad += 1;
        }
    }

    // min(1, x) <= ln(1 + x) / ln 2 on a linear grid over [0, 10] and a log grid up to 1e12.
    let linear = (0..=1_000_000).map(|k| k as f64 * 1e-5);
    let log = (0..=100_000).map(|k| 10f64.powf(-12.0 + 24.0 * k as f64 / 100_000.0));
    let min_log_bad = linear.chain(log).filter(|&x| x.min(1.0) > x.ln_1p() / std::f64::consts::LN_2).count();

    // Adaptive covariances stay PSD and every family appends without touching earlier entries.
    let stream_results: Vec<(bool, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|i| -> mmucb::Result<(bool, bool)> {
            let mut rng = SeededRng::derive(10, i);
            let d = 1 + rng.index(5);
            let sigma = rng.uniform_in(0.05, 1.0);
            let spec = match i % 4 {
                0 => MixtureSpec::standard(rng.uniform_in(0.1, 3.0), sigma)?,
                1 => random_linear_spec(&mut rng, d, sigma)?,
                2 => MixtureSpec::mean_kernel(
                    MeanFunction::Zero,
                    KernelFunction::Rbf { lengthscale: rng.uniform_in(0.2, 3.0), variance: 1.0 },
                    sigma,
                )?,
                _ => random_adaptive_spec(&mut rng, sigma)?,
            };
            let adaptive_spec = random_adaptive_spec(&mut rng, sigma)?;
            let (mut psd, mut prefix) = (true, true);
            for s in [&spec, &adaptive_spec] {
                let mut state = MixtureState::new();
                let mut last_reward = None;
                for _ in 0..1 + rng.index(25) {
                    let (old_mean, old_cov) = bits(&state);
                    let phi = random_feature(&mut rng, d, 2.0);
                    state.append(s, &phi, last_reward)?;
                    let (new_mean, new_cov) = bits(&state);
                    let n = old_mean.len();
                    prefix &= new_mean[..n] == old_mean[..];
                    for c in 0..n {
                        prefix &= new_cov[c * (n + 1)..c * (n + 1) + n] == old_cov[c * n..(c + 1) * n];
                    }
                    last_reward = Some(rng.normal());
                }
                if s.is_adaptive() {
                    let cov = state.covariance();
                    let scale = cov.diagonal().amax().max(1.0);
                    psd &= cov.symmetric_eigenvalues().min() >= -1e-10 * scale;
                }
            }
            Ok((psd, prefix))
        })
        .collect::<mmucb::Result<_>>()?;
    let psd_bad = stream_results.iter().filter(|r| !r.0).count();
    let prefix_bad = stream_results.iter().filter(|r| !r.1).count();
    Ok(Outcome {
        pass: det_trace_bad == 0 && min_log_bad == 0 && psd_bad == 0 && prefix_bad == 0,
        detail: format!(
            "det-trace violations {det_trace_bad}/1000, min(1,x) grid violations {min_log_bad}, \
             non-PSD adaptive streams {psd_bad}/1000, prefix mismatches {prefix_bad}/1000"
        ),
    })
}
