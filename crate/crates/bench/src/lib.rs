//! Fixtures shared by the benchmarks.

use mmucb::{ConfidenceParams, EfficientRadius, GramState, MixtureSpec, SeededRng};

pub const SIGMA: f64 = 0.1;

pub fn params() -> ConfidenceParams {
    ConfidenceParams::new(SIGMA, 10.0, 0.01).expect("valid parameters")
}

/// `t` random unit-ball features in dimension `d` with noisy linear rewards.
pub fn history(seed: u64, d: usize, t: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let theta = rng.normal_vec(d);
    let mut features = Vec::with_capacity(t);
    let mut rewards = Vec::with_capacity(t);
    for _ in 0..t {
        let v = rng.normal_vec(d);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let phi: Vec<f64> = v.iter().map(|x| x / n).collect();
        rewards.push(phi.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + SIGMA * rng.normal());
        features.push(phi);
    }
    (features, rewards)
}

/// Gram state and standard-mixture radius after replaying a history.
pub fn state(d: usize, t: usize) -> (GramState, f64) {
    let (features, rewards) = history(1, d, t);
    let mut gram = GramState::new(d, SIGMA * SIGMA, params()).expect("valid state");
    let mut radius =
        EfficientRadius::new(&MixtureSpec::standard(1.0, SIGMA).expect("valid mixture"), d, params()).expect("linear family");
    for (phi, r) in features.iter().zip(&rewards) {
        gram.update(phi, *r).expect("finite update");
        radius.update(phi, *r).expect("finite update");
    }
    (gram, radius.radius_sq())
}
