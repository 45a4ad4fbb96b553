//! Confidence-width and radius studies on random linear functions of random
//! Fourier features.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::sample_theta_star;
use crate::confidence::{radius_amm, radius_oful, ConfidenceParams, DenseRadius, EfficientRadius, GramState};
use crate::error::{check_positive, Error, Result};
use crate::features::FeatureMap;
use crate::linalg::dot;
use crate::mixtures::{KernelFunction, MeanFunction, MixtureSpec};
use crate::rng::SeededRng;
use crate::ucb::{DualProfile, DualSearchConfig};

/// Shared settings of the synthetic regression problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSettings {
    pub input_dim: usize,
    pub lengthscale: f64,
    pub sigma: f64,
    pub bound_b: f64,
    pub delta: f64,
    /// Mixture scale; the analytic bounds use `alpha = sigma^2 / c`.
    pub c: f64,
    pub seed: u64,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        Self { input_dim: 10, lengthscale: 1.0, sigma: 0.1, bound_b: 10.0, delta: 0.01, c: 1.0, seed: 0 }
    }
}

impl ProblemSettings {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        check_positive("lengthscale", self.lengthscale)?;
        check_positive("c", self.c)?;
        self.params().map(|_| ())
    }

    pub fn params(&self) -> Result<ConfidenceParams> {
        ConfidenceParams::new(self.sigma, self.bound_b, self.delta)
    }

    pub fn alpha(&self) -> f64 {
        self.sigma * self.sigma / self.c
    }

    /// Feature map, `theta*` and a data stream for one problem instance.
    fn instance(&self, d: usize, stream: u64) -> Result<Instance> {
        let map_seed = SeededRng::derive(self.seed, stream).next_u64();
        let map = FeatureMap::random_cosine(map_seed, self.input_dim, d, self.lengthscale)?;
        let mut rng = SeededRng::derive(self.seed ^ 0x5eed, stream);
        let theta = sample_theta_star(d, self.bound_b, &mut rng);
        Ok(Instance { map, theta, rng, sigma: self.sigma, input_dim: self.input_dim })
    }
}

struct Instance {
    map: FeatureMap,
    theta: Vec<f64>,
    rng: SeededRng,
    sigma: f64,
    input_dim: usize,
}

impl Instance {
    fn point(&mut self) -> Vec<f64> {
        (0..self.input_dim).map(|_| self.rng.uniform()).collect()
    }

    /// Random input, its features and a noisy reward.
    fn sample(&mut self) -> Result<(Vec<f64>, f64)> {
        let x = self.point();
        let phi = self.map.featurize(&x)?;
        let y = dot(&phi, &self.theta) + self.sigma * self.rng.normal();
        Ok((phi, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthCell {
    pub d: usize,
    pub t: usize,
    pub cmm: f64,
    pub amm: f64,
    pub oful: f64,
    /// Test points where `cmm <= amm < oful` failed.
    pub violations: usize,
}

impl WidthCell {
    pub fn ordered(&self) -> bool {
        self.violations == 0
    }
}

/// Average widths (UCB minus LCB) of the exact, analytic and OFUL bounds at
/// `test_points` uniform inputs, after `t` noisy observations in dimension `d`.
pub fn width_cell(s: &ProblemSettings, d: usize, t: usize, test_points: usize) -> Result<WidthCell> {
    s.validate()?;
    if test_points == 0 {
        return Err(Error::invalid("test_points", "must be positive"));
    }
    let params = s.params()?;
    let mut inst = s.instance(d, ((d as u64) << 32) | t as u64)?;
    let spec = MixtureSpec::standard(s.c, s.sigma)?;
    let mut gram = GramState::new(d, s.alpha(), params)?;
    let mut radius = EfficientRadius::new(&spec, d, params)?;
    for _ in 0..t {
        let (phi, y) = inst.sample()?;
        gram.update(&phi, y)?;
        radius.update(&phi, y)?;
    }
    let r_mm_sq = radius.radius_sq();
    let r_amm = radius_amm(&gram, r_mm_sq)?;
    let r_oful = radius_oful(&gram);
    let profile = DualProfile::new(&gram, r_mm_sq, s.bound_b)?;
    let cfg = DualSearchConfig::default();

    let (mut cmm, mut amm, mut oful) = (0.0, 0.0, 0.0);
    let mut violations = 0;
    for _ in 0..test_points {
        let x = inst.point();
        let phi = inst.map.featurize(&x)?;
        let spread = gram.inv_norm_sq(&DVector::from_column_slice(&phi)).sqrt();
        let wc = profile.exact_ucb(&phi, &cfg)?.value - profile.exact_lcb(&phi, &cfg)?.value;
        let wa = 2.0 * r_amm * spread;
        let wo = 2.0 * r_oful * spread;
        if !(wc <= wa * (1.0 + 1e-9) && wa < wo) {
            violations += 1;
        }
        cmm += wc;
        amm += wa;
        oful += wo;
    }
    let n = test_points as f64;
    Ok(WidthCell { d, t, cmm: cmm / n, amm: amm / n, oful: oful / n, violations })
}

/// Every `(d, t)` combination, computed in parallel.
pub fn width_grid(s: &ProblemSettings, ds: &[usize], ts: &[usize], test_points: usize) -> Result<Vec<WidthCell>> {
    let cells: Vec<(usize, usize)> = ds.iter().flat_map(|&d| ts.iter().map(move |&t| (d, t))).collect();
    cells.par_iter().map(|&(d, t)| width_cell(s, d, t, test_points)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    Standard,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiiRow {
    pub seed: u64,
    pub t: usize,
    pub mixture: MixtureKind,
    pub r_mm: f64,
    pub r_amm: f64,
    pub r_oful: f64,
}

/// Per-round radii for the standard mixture and, when `beta` is given, the
/// adaptive mixture with the matching linear kernel, on the same data.
pub fn radii_trace(s: &ProblemSettings, d: usize, rounds: usize, run_seed: u64, beta: Option<f64>) -> Result<Vec<RadiiRow>> {
    s.validate()?;
    let params = s.params()?;
    let mut inst = s.instance(d, run_seed)?;
    let standard = MixtureSpec::standard(s.c, s.sigma)?;
    let mut gram = GramState::new(d, s.alpha(), params)?;
    let mut eff = EfficientRadius::new(&standard, d, params)?;
    let mut adaptive = match beta {
        Some(b) => {
            let spec = MixtureSpec::adaptive(MeanFunction::Zero, KernelFunction::Linear { scale: s.c }, Some(b), s.sigma)?;
            Some(DenseRadius::new(spec, params)?)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(rounds * if beta.is_some() { 2 } else { 1 });
    let mut push = |gram: &GramState, t: usize, kind: MixtureKind, r_mm_sq: f64| -> Result<()> {
        rows.push(RadiiRow {
            seed: run_seed,
            t,
            mixture: kind,
            r_mm: r_mm_sq.sqrt(),
            r_amm: radius_amm(gram, r_mm_sq)?,
            r_oful: radius_oful(gram),
        });
        Ok(())
    };
    for t in 1..=rounds {
        let (phi, y) = inst.sample()?;
        gram.update(&phi, y)?;
        eff.update(&phi, y)?;
        push(&gram, t, MixtureKind::Standard, eff.radius_sq())?;
        if let Some(a) = adaptive.as_mut() {
            a.update(&phi, y)?;
            push(&gram, t, MixtureKind::Adaptive, a.radius_sq())?;
        }
    }
    Ok(rows)
}
