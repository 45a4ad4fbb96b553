use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::Environment;
use crate::confidence::{radius_amm, radius_oful, ConfidenceParams, ConfidenceSet, DenseRadius, EfficientRadius, GramState};
use crate::error::{check_positive, Error, Result};
use crate::features::ActionSet;
use crate::linalg::norm;
use crate::mixtures::{MixtureFamily, MixtureSpec};
use crate::ucb::{argmax_action, argmax_action_with_gradient, AnalyticBound, DualProfile, DualSearchConfig, SearchOptions};

/// Round budget for mixtures evaluated through the `t x t` covariance.
pub const DENSE_ROUND_LIMIT: usize = 2000;

/// Which upper confidence bound the loop maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Exact UCB over the mixture confidence set. `alpha` is only used for the
    /// logged radius and the data-dependent bound.
    Cmm { alpha: f64 },
    /// Analytic UCB at a fixed `alpha`.
    Amm { alpha: f64 },
    /// OFUL ellipsoid with regularizer `alpha`.
    Oful { alpha: f64 },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Cmm { .. } => "cmm",
            Policy::Amm { .. } => "amm",
            Policy::Oful { .. } => "oful",
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Policy::Cmm { alpha } | Policy::Amm { alpha } | Policy::Oful { alpha } => alpha,
        }
    }

    /// Parses `cmm`, `amm` or `oful` with the given `alpha`.
    pub fn parse(name: &str, alpha: f64) -> Result<Self> {
        check_positive("alpha", alpha)?;
        match name {
            "cmm" => Ok(Policy::Cmm { alpha }),
            "amm" => Ok(Policy::Amm { alpha }),
            "oful" => Ok(Policy::Oful { alpha }),
            other => Err(Error::invalid("policy", format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub rounds: usize,
    pub params: ConfidenceParams,
    pub search: SearchOptions,
    pub dual: DualSearchConfig,
    /// Record wall-clock time per round. Off by default so that reruns are
    /// byte-identical.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(rounds: usize, params: ConfidenceParams) -> Self {
        Self { rounds, params, search: SearchOptions::default(), dual: DualSearchConfig::default(), timing: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub action: Vec<f64>,
    pub features: Vec<f64>,
    pub reward: f64,
    /// `phi(a_t)^T theta*`; NaN when the environment does not know it.
    pub expected_reward: f64,
    pub regret: f64,
    pub cum_regret: f64,
    /// `R_MM,t-1` and `R_AMM,t-1`: the radii the action was chosen with.
    pub r_mm: f64,
    pub r_amm: f64,
    pub alpha: f64,
    /// `2 R_{t-1} sqrt(phi(a_t)^T A_{t-1}^{-1} phi(a_t))` with the policy's radius.
    pub bound_term: f64,
    /// Prefix sum of `bound_term`.
    pub bound_dd: f64,
    /// The regret reference came from local search.
    pub approximate_optimum: bool,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    pub policy: Policy,
    pub records: Vec<RoundRecord>,
    /// Round at which the confidence set turned out empty; the run stops there.
    pub halted_at: Option<usize>,
    /// `theta*` was inside every confidence set `Theta_0 .. Theta_T`.
    /// `None` when the environment does not reveal `theta*`.
    pub covered: Option<bool>,
}

impl BanditRun {
    pub fn cumulative_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.records.first().map_or(0, |r| r.action.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..dim).map(|i| format!("action_{i}")));
        header.extend(
            ["reward", "expected_reward", "regret", "cum_regret", "r_mm", "r_amm", "alpha", "bound_dd", "elapsed_us"]
                .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            row.extend(r.action.iter().map(|x| x.to_string()));
            row.extend(
                [r.reward, r.expected_reward, r.regret, r.cum_regret, r.r_mm, r.r_amm, r.alpha, r.bound_dd]
                    .map(|x| x.to_string()),
            );
            row.push(r.elapsed_us.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `R_MM,t^2` through the cheapest route the mixture family allows.
#[derive(Debug, Clone)]
pub enum RadiusTracker {
    Efficient(EfficientRadius),
    Dense(DenseRadius),
}

impl RadiusTracker {
    pub fn new(spec: &MixtureSpec, d: usize, params: ConfidenceParams) -> Result<Self> {
        match spec.family {
            MixtureFamily::Standard { .. } | MixtureFamily::Linear { .. } => {
                EfficientRadius::new(spec, d, params).map(RadiusTracker::Efficient)
            }
            _ => DenseRadius::new(spec.clone(), params).map(RadiusTracker::Dense),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, RadiusTracker::Dense(_))
    }

    pub fn update(&mut self, phi: &[f64], reward: f64) -> Result<()> {
        match self {
            RadiusTracker::Efficient(r) => r.update(phi, reward),
            RadiusTracker::Dense(r) => r.update(phi, reward),
        }
    }

    pub fn radius_sq(&self) -> f64 {
        match self {
            RadiusTracker::Efficient(r) => r.radius_sq(),
            RadiusTracker::Dense(r) => r.radius_sq(),
        }
    }
}

fn is_empty_set(e: &Error) -> bool {
    matches!(e, Error::EmptyConfidenceSet { .. } | Error::InconsistentRadius { .. })
}

/// LinUCB: each round, maximize the policy's UCB over the offered actions,
/// play the maximizer, and fold the reward into the statistics.
pub fn run_linucb(policy: Policy, env: &mut dyn Environment, spec: &MixtureSpec, cfg: &RunConfig) -> Result<BanditRun> {
    if cfg.rounds == 0 {
        return Err(Error::invalid("rounds", "must be at least 1"));
    }
    check_positive("alpha", policy.alpha())?;
    cfg.dual.validate()?;
    let params = cfg.params;
    let d = env.feature_map().feature_dim();
    if let Some(theta) = env.theta_star() {
        if norm(theta) > params.bound_b * (1.0 + 1e-12) {
            return Err(Error::invalid("theta*", format!("norm {} exceeds B = {}", norm(theta), params.bound_b)));
        }
    }
    if let Some(scale) = env.noise_scale() {
        if scale > params.sigma * (1.0 + 1e-12) {
            return Err(Error::invalid("noise", format!("scale {scale} exceeds declared sigma {}", params.sigma)));
        }
    }
    let mut gram = GramState::new(d, policy.alpha(), params)?;
    let mut tracker = RadiusTracker::new(spec, d, params)?;
    if tracker.is_dense() && cfg.rounds > DENSE_ROUND_LIMIT {
        return Err(Error::invalid("rounds", format!("dense mixtures are limited to {DENSE_ROUND_LIMIT} rounds")));
    }
    let theta_star = env.theta_star().map(DVector::from_column_slice);
    let mut covered = theta_star.as_ref().map(|t| {
        ConfidenceSet::new(tracker.radius_sq(), params.bound_b).is_ok_and(|s| s.contains(&gram, t))
    });

    let mut records = Vec::with_capacity(cfg.rounds);
    let mut cum_regret = 0.0;
    let mut bound_dd = 0.0;
    let mut halted_at = None;
    for t in 1..=cfg.rounds {
        let start = cfg.timing.then(Instant::now);
        let set = env.next_action_set()?;
        let r_mm_sq = tracker.radius_sq();
        let step = choose(policy, env, &gram, r_mm_sq, &set, cfg);
        let (action, r_amm, radius, alpha) = match step {
            Ok(v) => v,
            Err(e) if is_empty_set(&e) => {
                halted_at = Some(t);
                if let Some(c) = covered.as_mut() {
                    *c = false;
                }
                break;
            }
            Err(e) => return Err(e),
        };
        let phi = env.feature_map().featurize(&action)?;
        let width = gram.inv_norm_sq(&DVector::from_column_slice(&phi)).sqrt();
        let bound_term = 2.0 * radius * width;
        bound_dd += bound_term;

        let pull = env.pull(&action)?;
        let optimum = env.optimum(&set, &cfg.search.scaled(10))?;
        let (regret, approximate_optimum) = match (optimum, pull.expected) {
            (Some(o), Some(e)) => (o.value - e, o.approximate),
            _ => (f64::NAN, false),
        };
        cum_regret += regret;

        gram.update(&phi, pull.reward)?;
        tracker.update(&phi, pull.reward)?;
        if let (Some(theta), Some(c)) = (theta_star.as_ref(), covered.as_mut()) {
            *c = *c && ConfidenceSet::new(tracker.radius_sq(), params.bound_b).is_ok_and(|s| s.contains(&gram, theta));
        }
        records.push(RoundRecord {
            t,
            action,
            features: phi,
            reward: pull.reward,
            expected_reward: pull.expected.unwrap_or(f64::NAN),
            regret,
            cum_regret,
            r_mm: r_mm_sq.sqrt(),
            r_amm,
            alpha,
            bound_term,
            bound_dd,
            approximate_optimum,
            elapsed_us: start.map_or(0, |s| s.elapsed().as_micros() as u64),
        });
    }
    Ok(BanditRun { policy, records, halted_at, covered })
}

/// Chooses the round's action. Returns `(action, R_AMM, policy radius, alpha)`.
fn choose(
    policy: Policy,
    env: &dyn Environment,
    gram: &GramState,
    r_mm_sq: f64,
    set: &ActionSet,
    cfg: &RunConfig,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let map = env.feature_map();
    let r_amm = radius_amm(gram, r_mm_sq)?;
    match policy {
        Policy::Amm { alpha } | Policy::Oful { alpha } => {
            let radius = if matches!(policy, Policy::Amm { .. }) { r_amm } else { radius_oful(gram) };
            let bound = AnalyticBound::new(gram, radius)?;
            let best = argmax_action_with_gradient(set, &cfg.search, |a| bound.ucb_with_gradient(map, a))?;
            Ok((best.action, r_amm, radius, alpha))
        }
        Policy::Cmm { .. } => {
            let profile = DualProfile::new(gram, r_mm_sq, cfg.params.bound_b)?;
            let best = argmax_action(set, &cfg.search, |a| Ok(profile.exact_ucb(&map.featurize(a)?, &cfg.dual)?.value))?;
            let chosen = profile.exact_ucb(&map.featurize(&best.action)?, &cfg.dual)?;
            Ok((best.action, r_amm, r_amm, chosen.alpha))
        }
    }
}

/// Runs every policy on every seed in parallel. `make_env(seed)` must build
/// the same environment for the same seed; results are ordered as
/// `[seed][policy]` regardless of scheduling.
pub fn run_batch<E, F>(
    policies: &[Policy],
    seeds: &[u64],
    spec: &MixtureSpec,
    cfg: &RunConfig,
    make_env: F,
) -> Result<Vec<Vec<BanditRun>>>
where
    E: Environment,
    F: Fn(u64) -> Result<E> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            policies
                .iter()
                .map(|&p| {
                    let mut env = make_env(seed)?;
                    run_linucb(p, &mut env, spec, cfg)
                })
                .collect()
        })
        .collect()
}

/// Fraction of runs whose confidence sets contained `theta*` at every round.
pub fn coverage_fraction(runs: &[BanditRun]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::invalid("runs", "need at least one run"));
    }
    let mut hits = 0usize;
    for r in runs {
        match r.covered {
            Some(true) => hits += 1,
            Some(false) => {}
            None => return Err(Error::invalid("runs", "coverage needs an environment with known theta*")),
        }
    }
    Ok(hits as f64 / runs.len() as f64)
}
