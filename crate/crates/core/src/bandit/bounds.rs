//! Regret bounds: the data-dependent sum of confidence widths along a run,
//! and the worst-case closed forms for standard and linear mixtures.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::run::{BanditRun, Policy, RadiusTracker};
use crate::confidence::{radius_amm, radius_oful, ConfidenceParams, GramState};
use crate::error::{check_positive, Error, Result};
use crate::mixtures::MixtureSpec;

/// Data-dependent bound after each round of a run, as logged by the loop.
pub fn eval_bound_data_dependent(run: &BanditRun) -> Vec<f64> {
    run.records.iter().map(|r| r.bound_dd).collect()
}

/// Recomputes the data-dependent bound from the played features and rewards:
/// `sum_t 2 R_{t-1} sqrt(phi(a_t)^T (Phi_{t-1}^T Phi_{t-1} + alpha I)^{-1} phi(a_t))`,
/// with `R = R_AMM` for the mixture policies and `R_OFUL` for OFUL.
pub fn replay_bound_data_dependent(run: &BanditRun, spec: &MixtureSpec, params: ConfidenceParams) -> Result<Vec<f64>> {
    let Some(first) = run.records.first() else {
        return Ok(Vec::new());
    };
    let d = first.features.len();
    let mut gram = GramState::new(d, run.policy.alpha(), params)?;
    let mut tracker = RadiusTracker::new(spec, d, params)?;
    let mut total = 0.0;
    let mut out = Vec::with_capacity(run.records.len());
    for rec in &run.records {
        let radius = match run.policy {
            Policy::Oful { .. } => radius_oful(&gram),
            _ => radius_amm(&gram, tracker.radius_sq())?,
        };
        let phi = nalgebra::DVector::from_column_slice(&rec.features);
        total += 2.0 * radius * gram.inv_norm_sq(&phi).sqrt();
        out.push(total);
        gram.update(&rec.features, rec.reward)?;
        tracker.update(&rec.features, rec.reward)?;
    }
    Ok(out)
}

/// True when the realized cumulative regret stays below the bound at every round.
pub fn bound_holds(run: &BanditRun) -> bool {
    run.records.iter().all(|r| r.cum_regret <= r.bound_dd)
}

/// Inputs of the worst-case bound for `N(0, c Phi Phi^T)` mixtures with `alpha = sigma^2 / c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardBoundParams {
    pub c: f64,
    pub sigma: f64,
    pub bound_b: f64,
    /// Feature norm bound `L`.
    pub l: f64,
    /// Expected-reward bound `C`.
    pub reward_bound: f64,
    pub d: usize,
    pub delta: f64,
}

fn check_delta(delta: f64, upper: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= upper) {
        return Err(Error::invalid("delta", format!("must lie in (0, {upper}], got {delta}")));
    }
    Ok(())
}

impl StandardBoundParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)?;
        check_positive("sigma", self.sigma)?;
        check_positive("B", self.bound_b)?;
        check_positive("L", self.l)?;
        check_positive("C", self.reward_bound)?;
        if self.d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        check_delta(self.delta, 1.0)
    }
}

/// `(2/sqrt(ln 2)) max{C, sigma sqrt(d ln(1 + c L^2 T/(sigma^2 d)) + B^2/c + 2 ln(1/delta))}
///  * sqrt(d T ln(1 + c L^2 T/(sigma^2 d)))`.
pub fn eval_bound_data_independent(p: &StandardBoundParams, rounds: usize) -> Result<f64> {
    p.validate()?;
    if rounds == 0 {
        return Ok(0.0);
    }
    let d = p.d as f64;
    let t = rounds as f64;
    let log_term = (p.c * p.l * p.l * t / (p.sigma * p.sigma * d)).ln_1p();
    let radius = p.sigma * (d * log_term + p.bound_b * p.bound_b / p.c - 2.0 * p.delta.ln()).sqrt();
    Ok(2.0 / LN_2.sqrt() * p.reward_bound.max(radius) * (d * t * log_term).sqrt())
}

/// Inputs of the worst-case bound for `N(Phi theta0, sigma0^2 Phi Phi^T)` mixtures at any `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralBoundParams {
    pub sigma: f64,
    pub sigma0: f64,
    /// `|theta* - theta0|`.
    pub prior_offset: f64,
    /// `|theta*|`.
    pub theta_norm: f64,
    pub bound_b: f64,
    pub l: f64,
    pub reward_bound: f64,
    pub d: usize,
    pub alpha: f64,
    /// The bound holds with probability `1 - 2 delta`; `delta` must be at most 1/2.
    pub delta: f64,
}

impl GeneralBoundParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)?;
        check_positive("sigma0", self.sigma0)?;
        check_positive("B", self.bound_b)?;
        check_positive("L", self.l)?;
        check_positive("C", self.reward_bound)?;
        check_positive("alpha", self.alpha)?;
        if !(self.prior_offset >= 0.0 && self.theta_norm >= 0.0) {
            return Err(Error::invalid("norms", "must be >= 0"));
        }
        if self.d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        check_delta(self.delta, 0.5)
    }

    /// Squared radius bound `U_AMM,T-1^2`.
    pub fn radius_bound_sq(&self, rounds: usize) -> f64 {
        let d = self.d as f64;
        let s2 = self.sigma * self.sigma;
        let tm1 = rounds.saturating_sub(1) as f64;
        let log_inv_delta = -self.delta.ln();
        let prior_log = (tm1 * self.sigma0 * self.sigma0 * self.l * self.l / (s2 * d)).ln_1p();
        let ridge_log = (tm1 * self.l * self.l / (self.alpha * d)).ln_1p();
        s2 * d
            + s2 / (self.sigma0 * self.sigma0) * self.prior_offset * self.prior_offset
            + s2 * d * prior_log
            + self.alpha * self.bound_b * self.bound_b
            + 4.0 * s2 * log_inv_delta
            + s2 * d * ridge_log
            + 2.0 * self.alpha.sqrt() * self.theta_norm * (s2 * d * ridge_log + 2.0 * s2 * log_inv_delta).sqrt()
    }
}

/// `(2/sqrt(ln 2)) max{C, U_AMM,T-1} sqrt(d T ln(1 + L^2 T/(alpha d)))`.
pub fn eval_bound_general(p: &GeneralBoundParams, rounds: usize) -> Result<f64> {
    p.validate()?;
    if rounds == 0 {
        return Ok(0.0);
    }
    let d = p.d as f64;
    let t = rounds as f64;
    let log_term = (p.l * p.l * t / (p.alpha * d)).ln_1p();
    let u = p.radius_bound_sq(rounds).sqrt();
    Ok(2.0 / LN_2.sqrt() * p.reward_bound.max(u) * (d * t * log_term).sqrt())
}
