//! Upper and lower confidence bounds over the confidence set, and their
//! maximization over action sets.
//!
//! For a fixed multiplier ratio `alpha` the Lagrangian dual of
//! `max phi^T theta  s.t. |Phi theta - r| <= R_MM, |theta| <= B`
//! collapses to the closed form
//! `phi^T theta_hat_alpha + R_AMM(alpha) sqrt(phi^T A_alpha^{-1} phi)`.
//! Every `alpha` gives a valid upper bound; the minimum over `alpha` is the
//! exact UCB. [`DualProfile`] diagonalizes `Phi^T Phi` once so each `alpha`
//! costs `O(d)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::confidence::GramState;
use crate::error::{check_finite, check_len, Error, Result};
use crate::features::{ActionSet, FeatureMap};

/// Squared radii in `(-RADIUS_SLACK * (R_MM^2 + 1), 0)` are rounding noise.
const RADIUS_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct UcbQuery<'a> {
    pub phi: &'a [f64],
    pub gram: &'a GramState,
    pub r_mm_sq: f64,
    pub bound_b: f64,
}

impl<'a> UcbQuery<'a> {
    pub fn new(phi: &'a [f64], gram: &'a GramState, r_mm_sq: f64, bound_b: f64) -> Result<Self> {
        check_len(gram.dim(), phi.len())?;
        check_finite("features", phi)?;
        if !(r_mm_sq.is_finite() && r_mm_sq >= 0.0) {
            return Err(Error::invalid("r_mm_sq", format!("must be finite and >= 0, got {r_mm_sq}")));
        }
        if !(bound_b.is_finite() && bound_b >= 0.0) {
            return Err(Error::invalid("bound_b", format!("must be finite and >= 0, got {bound_b}")));
        }
        Ok(Self { phi, gram, r_mm_sq, bound_b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSearchConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Relative tolerance on the bound value.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Points of the initial log-spaced scan.
    pub grid_points: usize,
}

impl Default for DualSearchConfig {
    fn default() -> Self {
        Self { alpha_min: 1e-8, alpha_max: 1e12, tolerance: 1e-9, max_iters: 200, grid_points: 41 }
    }
}

impl DualSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min < self.alpha_max && self.alpha_max.is_finite()) {
            return Err(Error::invalid("alpha range", "need 0 < alpha_min < alpha_max < inf"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if self.grid_points < 3 {
            return Err(Error::invalid("grid_points", "need at least 3"));
        }
        Ok(())
    }
}

/// Result of the dual minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    pub value: f64,
    /// Multiplier ratio at which `value` was attained.
    pub alpha: f64,
    /// The best value sat at an end of the search bracket.
    pub boundary: bool,
    pub evaluations: usize,
}

/// `phi^T theta_hat + R_AMM sqrt(phi^T A^{-1} phi)` at the Gram state's own `alpha`.
pub fn analytic_ucb(q: &UcbQuery) -> Result<f64> {
    analytic_parts(q).map(|(m, w)| m + w)
}

pub fn analytic_lcb(q: &UcbQuery) -> Result<f64> {
    analytic_parts(q).map(|(m, w)| m - w)
}

/// `(phi^T theta_hat, R_AMM sqrt(phi^T A^{-1} phi))` at the Gram state's `alpha`.
fn analytic_parts(q: &UcbQuery) -> Result<(f64, f64)> {
    let g = q.gram;
    let phi = DVector::from_column_slice(q.phi);
    let theta = g.theta_hat();
    let r2 = radius_sq_at(q.r_mm_sq, g.alpha(), q.bound_b, g.rr(), g.b().dot(&theta), g.rounds())?;
    Ok((phi.dot(&theta), (r2 * g.inv_norm_sq(&phi)).sqrt()))
}

fn radius_sq_at(r_mm_sq: f64, alpha: f64, bound_b: f64, rr: f64, fit: f64, round: usize) -> Result<f64> {
    let value = r_mm_sq + alpha * bound_b * bound_b - rr + fit;
    if value >= 0.0 {
        Ok(value)
    } else if value > -RADIUS_SLACK * (r_mm_sq + 1.0) {
        Ok(0.0)
    } else {
        Err(Error::EmptyConfidenceSet { round })
    }
}

pub fn exact_ucb(q: &UcbQuery, cfg: &DualSearchConfig) -> Result<DualSolution> {
    DualProfile::new(q.gram, q.r_mm_sq, q.bound_b)?.exact_ucb(q.phi, cfg)
}

pub fn exact_lcb(q: &UcbQuery, cfg: &DualSearchConfig) -> Result<DualSolution> {
    DualProfile::new(q.gram, q.r_mm_sq, q.bound_b)?.exact_lcb(q.phi, cfg)
}

/// Spectral form of the round's statistics, shared by every action queried
/// in that round.
#[derive(Debug, Clone)]
pub struct DualProfile {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    /// `Q^T b`.
    proj_b: DVector<f64>,
    rr: f64,
    r_mm_sq: f64,
    bound_b: f64,
    anchor_alpha: f64,
    round: usize,
}

impl DualProfile {
    pub fn new(gram: &GramState, r_mm_sq: f64, bound_b: f64) -> Result<Self> {
        if !(r_mm_sq.is_finite() && r_mm_sq >= 0.0) {
            return Err(Error::invalid("r_mm_sq", format!("must be finite and >= 0, got {r_mm_sq}")));
        }
        let g = gram.gram();
        let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
        let eigenvalues = eig.eigenvalues.map(|l| l.max(0.0));
        let proj_b = eig.eigenvectors.tr_mul(gram.b());
        Ok(Self {
            eigenvalues,
            eigenvectors: eig.eigenvectors,
            proj_b,
            rr: gram.rr(),
            r_mm_sq,
            bound_b,
            anchor_alpha: gram.alpha(),
            round: gram.rounds(),
        })
    }

    pub fn r_mm_sq(&self) -> f64 {
        self.r_mm_sq
    }

    /// `R_AMM(alpha)^2`; independent of the action.
    pub fn radius_sq(&self, alpha: f64) -> Result<f64> {
        let fit: f64 = self
            .proj_b
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(c, l)| c * c / (l + alpha))
            .sum();
        radius_sq_at(self.r_mm_sq, alpha, self.bound_b, self.rr, fit, self.round)
    }

    fn project(&self, phi: &[f64]) -> Result<DVector<f64>> {
        check_len(self.proj_b.len(), phi.len())?;
        check_finite("features", phi)?;
        Ok(self.eigenvectors.tr_mul(&DVector::from_column_slice(phi)))
    }

    /// Analytic bound at `alpha` for projected features; `sign` = +1 for UCB, -1 for LCB.
    fn eval(&self, p: &DVector<f64>, alpha: f64, sign: f64) -> Result<f64> {
        let mut mean = 0.0;
        let mut q = 0.0;
        let mut fit = 0.0;
        for i in 0..p.len() {
            let inv = 1.0 / (self.eigenvalues[i] + alpha);
            mean += p[i] * self.proj_b[i] * inv;
            q += p[i] * p[i] * inv;
            fit += self.proj_b[i] * self.proj_b[i] * inv;
        }
        let r2 = radius_sq_at(self.r_mm_sq, alpha, self.bound_b, self.rr, fit, self.round)?;
        Ok(sign * mean + (r2 * q).sqrt())
    }

    /// Analytic UCB at a given `alpha`.
    pub fn analytic_ucb(&self, phi: &[f64], alpha: f64) -> Result<f64> {
        let p = self.project(phi)?;
        self.eval(&p, alpha, 1.0)
    }

    pub fn analytic_lcb(&self, phi: &[f64], alpha: f64) -> Result<f64> {
        let p = self.project(phi)?;
        self.eval(&p, alpha, -1.0).map(|v| -v)
    }

    pub fn exact_ucb(&self, phi: &[f64], cfg: &DualSearchConfig) -> Result<DualSolution> {
        let p = self.project(phi)?;
        self.minimize(&p, 1.0, cfg)
    }

    /// `min_theta phi^T theta = -max_theta (-phi)^T theta`.
    pub fn exact_lcb(&self, phi: &[f64], cfg: &DualSearchConfig) -> Result<DualSolution> {
        let p = self.project(phi)?;
        let mut sol = self.minimize(&p, -1.0, cfg)?;
        sol.value = -sol.value;
        Ok(sol)
    }

    /// Log-grid scan plus golden-section refinement of `alpha -> bound(alpha)`
    /// in `ln alpha`. The returned value is the smallest bound evaluated.
    fn minimize(&self, p: &DVector<f64>, sign: f64, cfg: &DualSearchConfig) -> Result<DualSolution> {
        cfg.validate()?;
        if p.iter().all(|&x| x == 0.0) {
            // Feasibility still has to be checked even though the bound is 0.
            self.radius_sq(self.anchor_alpha)?;
            return Ok(DualSolution { value: 0.0, alpha: self.anchor_alpha, boundary: false, evaluations: 1 });
        }
        let (lo, hi) = (cfg.alpha_min.ln(), cfg.alpha_max.ln());
        let n = cfg.grid_points;
        let f = |s: f64| self.eval(p, s.exp(), sign);

        let mut evaluations = 0;
        let mut best = (f64::INFINITY, self.anchor_alpha);
        let consider = |value: f64, s: f64, best: &mut (f64, f64)| {
            if value < best.0 {
                *best = (value, s.exp());
            }
        };

        let anchor = f(self.anchor_alpha.ln())?;
        evaluations += 1;
        consider(anchor, self.anchor_alpha.ln(), &mut best);

        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let mut values = Vec::with_capacity(n);
        for &s in &grid {
            let v = f(s)?;
            evaluations += 1;
            consider(v, s, &mut best);
            values.push(v);
        }
        let k = (0..n).fold(0, |k, i| if values[i] < values[k] { i } else { k });

        // Golden section on the bracket around the best grid point.
        let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(n - 1)]);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let mut f1 = f(x1)?;
        let mut f2 = f(x2)?;
        evaluations += 2;
        consider(f1, x1, &mut best);
        consider(f2, x2, &mut best);
        let mut iters = 0;
        while iters < cfg.max_iters && b - a > 1e-12 {
            let scale = f1.abs().max(f2.abs()).max(f64::MIN_POSITIVE);
            if b - a < 1e-4 && (f1 - f2).abs() <= cfg.tolerance * scale {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - ratio * (b - a);
                f1 = f(x1)?;
                consider(f1, x1, &mut best);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + ratio * (b - a);
                f2 = f(x2)?;
                consider(f2, x2, &mut best);
            }
            evaluations += 1;
            iters += 1;
        }

        let s_best = best.1.ln();
        let width = (hi - lo) / (n - 1) as f64;
        let boundary = (k == 0 && s_best - lo < 0.5 * width) || (k == n - 1 && hi - s_best < 0.5 * width);
        Ok(DualSolution { value: best.0, alpha: best.1, boundary, evaluations })
    }
}

/// Closed-form analytic bound at a fixed `alpha` with its action gradient.
#[derive(Debug, Clone)]
pub struct AnalyticBound {
    theta_hat: DVector<f64>,
    a_inv: DMatrix<f64>,
    radius: f64,
}

impl AnalyticBound {
    /// `radius` is `R_AMM` for AMM-UCB or `R_OFUL` for the OFUL baseline.
    pub fn new(gram: &GramState, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::invalid("radius", format!("must be finite and >= 0, got {radius}")));
        }
        Ok(Self { theta_hat: gram.theta_hat(), a_inv: gram.a_inv().clone(), radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    /// `(phi^T theta_hat, sqrt(phi^T A^{-1} phi))`.
    pub fn parts(&self, phi: &[f64]) -> Result<(f64, f64)> {
        check_len(self.theta_hat.len(), phi.len())?;
        let p = DVector::from_column_slice(phi);
        Ok((p.dot(&self.theta_hat), p.dot(&(&self.a_inv * &p)).max(0.0).sqrt()))
    }

    pub fn ucb(&self, phi: &[f64]) -> Result<f64> {
        self.parts(phi).map(|(m, s)| m + self.radius * s)
    }

    pub fn lcb(&self, phi: &[f64]) -> Result<f64> {
        self.parts(phi).map(|(m, s)| m - self.radius * s)
    }

    /// UCB at `action` and its gradient through the feature map, or `None`
    /// for the gradient when the map has no Jacobian.
    pub fn ucb_with_gradient(&self, map: &FeatureMap, action: &[f64]) -> Result<(f64, Option<Vec<f64>>)> {
        let phi = map.featurize(action)?;
        let p = DVector::from_column_slice(&phi);
        let ap = &self.a_inv * &p;
        let s = p.dot(&ap).max(0.0).sqrt();
        let value = p.dot(&self.theta_hat) + self.radius * s;
        let Some(jac) = map.jacobian(action)? else {
            return Ok((value, None));
        };
        let mut grad_phi = self.theta_hat.clone();
        if s > 0.0 {
            grad_phi.axpy(self.radius / s, &ap, 1.0);
        }
        Ok((value, Some(jac.tr_mul(&grad_phi).as_slice().to_vec())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub iters: usize,
    /// Central differences use step `fd_eps * (1 + |a_i|)`.
    pub fd_eps: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { restarts: 10, iters: 200, fd_eps: 1e-5 }
    }
}

impl SearchOptions {
    /// Same options with `factor` times the restarts.
    pub fn scaled(&self, factor: usize) -> Self {
        Self { restarts: self.restarts * factor, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Argmax {
    pub action: Vec<f64>,
    pub value: f64,
    /// Position in a finite action set.
    pub index: Option<usize>,
}

/// Maximizes `bound` over the action set. Finite sets are enumerated; boxes
/// use multi-restart projected gradient ascent with central differences.
pub fn argmax_action<F>(set: &ActionSet, opts: &SearchOptions, mut bound: F) -> Result<Argmax>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let eps = opts.fd_eps;
    argmax_with(set, opts, &mut |a: &[f64], want_grad: bool| {
        let value = bound(a)?;
        if !want_grad || !value.is_finite() {
            return Ok((value, None));
        }
        let mut x = a.to_vec();
        let mut grad = vec![0.0; a.len()];
        for i in 0..a.len() {
            let h = eps * (1.0 + a[i].abs());
            x[i] = a[i] + h;
            let up = bound(&x)?;
            x[i] = a[i] - h;
            let down = bound(&x)?;
            x[i] = a[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        Ok((value, Some(grad)))
    })
}

/// As [`argmax_action`], with a caller-supplied gradient. A `None` gradient
/// falls back to central differences.
pub fn argmax_action_with_gradient<F>(set: &ActionSet, opts: &SearchOptions, mut value_grad: F) -> Result<Argmax>
where
    F: FnMut(&[f64]) -> Result<(f64, Option<Vec<f64>>)>,
{
    let eps = opts.fd_eps;
    argmax_with(set, opts, &mut |a: &[f64], want_grad: bool| {
        let (value, grad) = value_grad(a)?;
        if !want_grad || grad.is_some() || !value.is_finite() {
            return Ok((value, grad));
        }
        let mut x = a.to_vec();
        let mut grad = vec![0.0; a.len()];
        for i in 0..a.len() {
            let h = eps * (1.0 + a[i].abs());
            x[i] = a[i] + h;
            let up = value_grad(&x)?.0;
            x[i] = a[i] - h;
            let down = value_grad(&x)?.0;
            x[i] = a[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        Ok((value, Some(grad)))
    })
}

type Objective<'a> = dyn FnMut(&[f64], bool) -> Result<(f64, Option<Vec<f64>>)> + 'a;

fn argmax_with(set: &ActionSet, opts: &SearchOptions, f: &mut Objective) -> Result<Argmax> {
    match set {
        ActionSet::Finite { actions } => {
            let mut best: Option<Argmax> = None;
            for (i, a) in actions.iter().enumerate() {
                let (v, _) = f(a, false)?;
                if v.is_finite() && best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(Argmax { action: a.clone(), value: v, index: Some(i) });
                }
            }
            best.ok_or(Error::NonFinite("bound at every action"))
        }
        ActionSet::Box { lower, upper } => {
            let mut best: Option<Argmax> = None;
            let center: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
            let span = lower.iter().zip(upper).map(|(l, u)| u - l).fold(0.0, f64::max);
            for r in 0..opts.restarts.max(1) {
                let start = if r == 0 { center.clone() } else { set.sample_point(r as u64 - 1) };
                let (a, v) = ascend(set, start, span, opts.iters, f)?;
                if v.is_finite() && best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(Argmax { action: a, value: v, index: None });
                }
            }
            best.ok_or(Error::NonFinite("bound at every restart"))
        }
    }
}

/// Projected gradient ascent with an adaptive step along the normalized gradient.
fn ascend(set: &ActionSet, mut a: Vec<f64>, span: f64, iters: usize, f: &mut Objective) -> Result<(Vec<f64>, f64)> {
    let (mut value, mut grad) = f(&a, true)?;
    if !value.is_finite() {
        return Ok((a, value));
    }
    let mut step = 0.1 * span;
    let min_step = 1e-10 * span.max(1e-300);
    for _ in 0..iters {
        let Some(g) = grad.as_ref() else { break };
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let mut improved = false;
        while step > min_step {
            let mut cand: Vec<f64> = a.iter().zip(g).map(|(x, gi)| x + step * gi / gn).collect();
            set.project(&mut cand);
            let moved = cand.iter().zip(&a).any(|(x, y)| x != y);
            if !moved {
                break;
            }
            let (v, _) = f(&cand, false)?;
            if v.is_finite() && v > value {
                a = cand;
                value = v;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        grad = f(&a, true)?.1;
    }
    Ok((a, value))
}
