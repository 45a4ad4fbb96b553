//! Quick numerical self-checks: exact UCB against the interior-point oracle,
//! incremental inverses against direct recomputation, and the efficient
//! radius against the `t x t` form.

use anyhow::Result;
use mmucb::oracle::UcbProgram;
use mmucb::{
    exact_ucb, mixture_dense, radius_mm_naive, ConfidenceParams, DualSearchConfig, EfficientRadius, GramState,
    MixtureSpec, SeededRng, UcbQuery,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn feature(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    let v = rng.normal_vec(d);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let s = rng.uniform_in(0.1, 1.0) / n;
    v.into_iter().map(|x| x * s).collect()
}

/// Random small instance: Gram state, mixture radius and a query direction.
fn instance(seed: u64, stream: u64) -> Result<(GramState, f64, f64, Vec<f64>)> {
    let mut rng = SeededRng::derive(seed, stream);
    let d = 1 + rng.index(3);
    let sigma = rng.uniform_in(0.1, 1.0);
    let b = rng.uniform_in(0.5, 3.0);
    let params = ConfidenceParams::new(sigma, b, 0.05)?;
    let theta = mmucb::bandit::sample_theta_star(d, b, &mut rng);
    let mut gram = GramState::new(d, sigma * sigma, params)?;
    let mut radius = EfficientRadius::new(&MixtureSpec::standard(1.0, sigma)?, d, params)?;
    for _ in 0..rng.index(11) {
        let phi = feature(&mut rng, d);
        let r = phi.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + sigma * rng.normal();
        gram.update(&phi, r)?;
        radius.update(&phi, r)?;
    }
    Ok((gram, radius.radius_sq(), b, feature(&mut rng, d)))
}

pub fn exact_ucb_vs_oracle(seed: u64, instances: u64) -> Result<Check> {
    let cfg = DualSearchConfig::default();
    let errors: Vec<Option<f64>> = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let (gram, r_sq, b, phi) = instance(seed, i)?;
            let Some(oracle) = UcbProgram::from_state(&gram, r_sq, b).solve(&phi, 1e-10)? else {
                return Ok(None);
            };
            let exact = exact_ucb(&UcbQuery::new(&phi, &gram, r_sq, b)?, &cfg)?.value;
            Ok(Some((exact - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE)))
        })
        .collect::<Result<_>>()?;
    let checked: Vec<f64> = errors.into_iter().flatten().collect();
    let worst = checked.iter().cloned().fold(0.0, f64::max);
    Ok(Check {
        name: "exact UCB vs convex-program oracle",
        pass: worst <= 1e-4 && !checked.is_empty(),
        detail: format!("{} instances, worst relative error {worst:.2e} (tol 1e-4)", checked.len()),
    })
}

pub fn incremental_inverse(seed: u64, d: usize, updates: usize) -> Result<Check> {
    let mut rng = SeededRng::new(seed);
    let mut gram = GramState::new(d, 1.0, ConfidenceParams::new(0.1, 1.0, 0.05)?)?;
    let mut direct = DMatrix::<f64>::identity(d, d);
    for _ in 0..updates {
        let phi = feature(&mut rng, d);
        gram.update(&phi, rng.normal())?;
        let v = DVector::from_column_slice(&phi);
        direct += &v * v.transpose();
    }
    let chol = direct.cholesky().ok_or_else(|| anyhow::anyhow!("accumulated Gram matrix is not positive definite"))?;
    let inv = chol.inverse();
    let inv_err = (gram.a_inv() - &inv).amax() / inv.amax();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let det_err = (gram.log_det_ratio() - log_det).exp_m1().abs();
    Ok(Check {
        name: "Sherman-Morrison inverse and determinant",
        pass: inv_err <= 1e-8 && det_err <= 1e-8,
        detail: format!("d={d}, {updates} updates: inverse error {inv_err:.2e}, determinant error {det_err:.2e} (tol 1e-8)"),
    })
}

pub fn efficient_radius(seed: u64, histories: u64) -> Result<Check> {
    let errors: Vec<f64> = (0..histories)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = SeededRng::derive(seed ^ 0xe5, i);
            let d = 1 + rng.index(8);
            let sigma = rng.uniform_in(0.1, 2.0);
            let theta0 = rng.normal_vec(d);
            let spec = MixtureSpec::linear(theta0, DMatrix::identity(d, d) * rng.uniform_in(0.2, 3.0), sigma)?;
            let params = ConfidenceParams::new(sigma, 1.0, 0.05)?;
            let mut eff = EfficientRadius::new(&spec, d, params)?;
            let (mut feats, mut rewards) = (Vec::new(), Vec::new());
            for _ in 0..1 + rng.index(40) {
                let phi = feature(&mut rng, d);
                let r = rng.normal();
                eff.update(&phi, r)?;
                feats.push(phi);
                rewards.push(r);
            }
            let state = mixture_dense(&spec, &feats, &rewards)?;
            let naive = radius_mm_naive(state.mean(), &state.covariance(), &rewards, &params)?;
            Ok((eff.radius_sq() - naive).abs() / naive)
        })
        .collect::<Result<_>>()?;
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    Ok(Check {
        name: "efficient vs naive radius",
        pass: worst <= 1e-8,
        detail: format!("{histories} linear-family histories, worst relative error {worst:.2e} (tol 1e-8)"),
    })
}

/// Runs every check and prints one line each.
pub fn run_all(seed: u64) -> Result<bool> {
    let checks = [exact_ucb_vs_oracle(seed, 200)?, incremental_inverse(seed, 50, 1000)?, efficient_radius(seed, 100)?];
    for c in &checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.pass))
}
