#![allow(dead_code)]

use mmucb::bandit::{ActionSource, Noise, SyntheticSetup};
use mmucb::{FeatureMap, MixtureSpec, Result, SeededRng};
use nalgebra::DMatrix;

/// Random feature vector with norm in `(0, max_norm]`.
pub fn random_feature(rng: &mut SeededRng, d: usize, max_norm: f64) -> Vec<f64> {
    let v = rng.normal_vec(d);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let scale = max_norm * rng.uniform_in(0.05, 1.0) / n;
    v.into_iter().map(|x| x * scale).collect()
}

/// Noisy linear rewards for random features, with `|theta*| <= bound_b`.
pub struct History {
    pub theta: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

pub fn history(rng: &mut SeededRng, d: usize, t: usize, sigma: f64, bound_b: f64) -> History {
    let theta = mmucb::bandit::sample_theta_star(d, bound_b, rng);
    let mut features = Vec::with_capacity(t);
    let mut rewards = Vec::with_capacity(t);
    for _ in 0..t {
        let phi = random_feature(rng, d, 1.0);
        let mean: f64 = phi.iter().zip(&theta).map(|(a, b)| a * b).sum();
        rewards.push(mean + sigma * rng.normal());
        features.push(phi);
    }
    History { theta, features, rewards }
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut SeededRng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let q = g.qr().q();
    let eig = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.uniform_in(lo, hi)));
    let m = &q * eig * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_linear_spec(rng: &mut SeededRng, d: usize, sigma: f64) -> Result<MixtureSpec> {
    let theta0: Vec<f64> = rng.normal_vec(d).into_iter().map(|x| 0.3 * x).collect();
    MixtureSpec::linear(theta0, random_spd(rng, d, 0.2, 3.0), sigma)
}

/// Linear bandit on random Fourier features of inputs in `[0, 1]^input_dim`,
/// with `arms` fresh uniform arms per round.
pub fn rff_setup(map_seed: u64, input_dim: usize, d: usize, arms: usize, sigma: f64, bound_b: f64) -> Result<SyntheticSetup> {
    Ok(SyntheticSetup {
        map: FeatureMap::random_cosine(map_seed, input_dim, d, 1.0)?,
        actions: ActionSource::RandomFinite { arms, lower: vec![0.0; input_dim], upper: vec![1.0; input_dim] },
        noise: Noise::Gaussian { sigma },
        theta_bound: bound_b,
    })
}

/// Two binomial standard errors around success probability `p` over `n` trials.
pub fn binomial_slack(p: f64, n: usize) -> f64 {
    2.0 * (p * (1.0 - p) / n as f64).sqrt()
}
