//! Confidence-set radii and the sufficient statistics behind them.
//!
//! The confidence set at round `t` is
//! `{ theta : |Phi_t theta - r_t| <= R_MM,t  and  |theta| <= B }`.
//! Everything here works from `d x d` statistics (`Phi^T Phi`, `Phi^T r`,
//! `r^T r`) updated by rank-one steps; the `t x t` form of the radius is kept
//! as [`radius_mm_naive`] for general mixtures and as a reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, check_positive, Error, Result};
use crate::linalg::{cholesky, cholesky_identity_plus, frobenius, inv_quad, log_det};
use crate::mixtures::{MixtureSpec, MixtureState};

/// Number of rank-one updates between direct re-inversions.
pub const REBUILD_INTERVAL: usize = 512;
/// Drift (Frobenius norm) above which the direct inverse replaces the incremental one.
pub const REBUILD_DRIFT: f64 = 1e-10;

/// Inverse and log-determinant of `Phi^T Phi + R` for a fixed SPD regularizer
/// `R`, maintained by Sherman–Morrison updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalInverse {
    gram: DMatrix<f64>,
    regularizer: DMatrix<f64>,
    inverse: DMatrix<f64>,
    /// `ln det(Phi^T Phi + R) - ln det(R)`.
    log_det_ratio: f64,
    since_rebuild: usize,
    rebuilds: usize,
}

impl IncrementalInverse {
    pub fn new(regularizer: DMatrix<f64>) -> Result<Self> {
        let d = regularizer.nrows();
        let inverse = cholesky(regularizer.clone(), "regularizer")?.inverse();
        Ok(Self {
            gram: DMatrix::zeros(d, d),
            regularizer,
            inverse,
            log_det_ratio: 0.0,
            since_rebuild: 0,
            rebuilds: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// `Phi^T Phi`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `(Phi^T Phi + R)^{-1}`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn log_det_ratio(&self) -> f64 {
        self.log_det_ratio
    }

    /// Number of times the direct inverse replaced the incremental one.
    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn add(&mut self, phi: &DVector<f64>) -> Result<()> {
        let u = &self.inverse * phi;
        let q = phi.dot(&u);
        let denom = 1.0 + q;
        self.gram.ger(1.0, phi, phi, 1.0);
        if !(denom > 0.0) || !denom.is_finite() {
            // Numerical corruption of the inverse: start over from the Gram matrix.
            return self.rebuild(true);
        }
        self.inverse.ger(-1.0 / denom, &u, &u, 1.0);
        self.log_det_ratio += q.ln_1p();
        self.since_rebuild += 1;
        if self.since_rebuild >= REBUILD_INTERVAL {
            self.rebuild(false)?;
        }
        Ok(())
    }

    /// Direct `(inverse, log_det_ratio)` of the current statistics.
    pub fn direct(&self) -> Result<(DMatrix<f64>, f64)> {
        let chol = cholesky(&self.gram + &self.regularizer, "regularized gram")?;
        let reg = cholesky(self.regularizer.clone(), "regularizer")?;
        Ok((chol.inverse(), log_det(&chol) - log_det(&reg)))
    }

    fn rebuild(&mut self, force: bool) -> Result<()> {
        let (inverse, log_det_ratio) = self.direct()?;
        if force || frobenius(&(&inverse - &self.inverse)) > REBUILD_DRIFT {
            self.inverse = inverse;
            self.log_det_ratio = log_det_ratio;
            self.rebuilds += 1;
        }
        self.since_rebuild = 0;
        Ok(())
    }
}

/// Known constants of the problem: noise level, parameter norm bound, risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub sigma: f64,
    pub bound_b: f64,
    pub delta: f64,
}

impl ConfidenceParams {
    pub fn new(sigma: f64, bound_b: f64, delta: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        if !(bound_b.is_finite() && bound_b >= 0.0) {
            return Err(Error::invalid("bound_b", format!("must be finite and >= 0, got {bound_b}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
        }
        Ok(Self { sigma, bound_b, delta })
    }

    /// `ln(1/delta)`.
    pub fn log_inv_delta(&self) -> f64 {
        -self.delta.ln()
    }

    /// Squared radius of the empty history: `2 sigma^2 ln(1/delta)`.
    pub fn empty_radius_sq(&self) -> f64 {
        2.0 * self.sigma * self.sigma * self.log_inv_delta()
    }
}

/// Ridge statistics `A_t = Phi^T Phi + alpha I`, `A_t^{-1}`,
/// `det(Phi^T Phi / alpha + I)`, `b_t = Phi^T r`, `r^T r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramState {
    alpha: f64,
    params: ConfidenceParams,
    inv: IncrementalInverse,
    b: DVector<f64>,
    rr: f64,
    t: usize,
}

impl GramState {
    pub fn new(d: usize, alpha: f64, params: ConfidenceParams) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        check_positive("alpha", alpha)?;
        Ok(Self {
            alpha,
            params,
            inv: IncrementalInverse::new(DMatrix::identity(d, d) * alpha)?,
            b: DVector::zeros(d),
            rr: 0.0,
            t: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }
    pub fn rounds(&self) -> usize {
        self.t
    }
    pub fn gram(&self) -> &DMatrix<f64> {
        self.inv.gram()
    }
    pub fn a_inv(&self) -> &DMatrix<f64> {
        self.inv.inverse()
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn rr(&self) -> f64 {
        self.rr
    }
    pub fn log_det_ratio(&self) -> f64 {
        self.inv.log_det_ratio()
    }
    pub fn det_ratio(&self) -> f64 {
        self.inv.log_det_ratio().exp()
    }
    pub fn incremental(&self) -> &IncrementalInverse {
        &self.inv
    }

    /// `A_t = Phi^T Phi + alpha I`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.gram() + DMatrix::identity(d, d) * self.alpha
    }

    /// Ridge estimate `A_t^{-1} b_t`.
    pub fn theta_hat(&self) -> DVector<f64> {
        self.a_inv() * &self.b
    }

    /// `|phi|^2` in the `A_t^{-1}` norm.
    pub fn inv_norm_sq(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&(self.a_inv() * phi)).max(0.0)
    }

    pub fn update(&mut self, phi: &[f64], reward: f64) -> Result<()> {
        check_len(self.dim(), phi.len())?;
        check_finite("features", phi)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let v = DVector::from_column_slice(phi);
        self.inv.add(&v)?;
        self.b.axpy(reward, &v, 1.0);
        self.rr += reward * reward;
        self.t += 1;
        Ok(())
    }

    /// `|Phi theta - r|^2 = theta^T Phi^T Phi theta - 2 b^T theta + r^T r`.
    pub fn residual_sq(&self, theta: &DVector<f64>) -> f64 {
        (theta.dot(&(self.gram() * theta)) - 2.0 * self.b.dot(theta) + self.rr).max(0.0)
    }
}

/// Squared radius `R_MM,t^2` for an arbitrary Gaussian mixture `N(mu, T)`:
/// `(mu - r)^T (I + T/sigma^2)^{-1} (mu - r) + sigma^2 ln det(I + T/sigma^2) + 2 sigma^2 ln(1/delta)`.
pub fn radius_mm_naive(
    mu: &[f64],
    t_mat: &DMatrix<f64>,
    rewards: &[f64],
    params: &ConfidenceParams,
) -> Result<f64> {
    let t = mu.len();
    check_len(t, rewards.len())?;
    check_len(t, t_mat.nrows())?;
    check_len(t, t_mat.ncols())?;
    let s2 = params.sigma * params.sigma;
    if t == 0 {
        return Ok(params.empty_radius_sq());
    }
    let chol = cholesky_identity_plus(t_mat, s2, "mixture covariance")?;
    let e = DVector::from_iterator(t, mu.iter().zip(rewards).map(|(m, r)| m - r));
    let value = inv_quad(&chol, &e) + s2 * log_det(&chol) + params.empty_radius_sq();
    if !value.is_finite() {
        return Err(Error::NonFinite("radius"));
    }
    Ok(value.max(0.0))
}

/// `d x d` evaluation of `R_MM,t^2` for mixtures `N(Phi theta0, Phi Sigma0 Phi^T)`.
///
/// Keeps `(Phi^T Phi + sigma^2 Sigma0^{-1})^{-1}`, `Phi^T (mu - r)` and
/// `(mu - r)^T (mu - r)`; the quadratic term uses
/// `v^T (I + M M^T / g)^{-1} v = v^T v - v^T M (M^T M + g I)^{-1} M^T v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientRadius {
    params: ConfidenceParams,
    theta0: DVector<f64>,
    inv: IncrementalInverse,
    v: DVector<f64>,
    vv: f64,
    t: usize,
}

impl EfficientRadius {
    pub fn new(spec: &MixtureSpec, d: usize, params: ConfidenceParams) -> Result<Self> {
        let (theta0, sigma0) = spec
            .linear_parameters(d)
            .ok_or(Error::FamilyMismatch("efficient radius needs a standard or linear mixture"))?;
        check_len(d, theta0.len())?;
        if (spec.sigma - params.sigma).abs() > 1e-12 * params.sigma {
            return Err(Error::invalid("sigma", "mixture and confidence parameters disagree"));
        }
        let s2 = params.sigma * params.sigma;
        let reg = cholesky(sigma0, "sigma0")?.inverse() * s2;
        // Symmetrize: the inverse is symmetric only up to rounding.
        let reg = (&reg + reg.transpose()) * 0.5;
        Ok(Self {
            params,
            theta0: DVector::from_vec(theta0),
            inv: IncrementalInverse::new(reg)?,
            v: DVector::zeros(d),
            vv: 0.0,
            t: 0,
        })
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn update(&mut self, phi: &[f64], reward: f64) -> Result<()> {
        check_len(self.theta0.len(), phi.len())?;
        check_finite("features", phi)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let p = DVector::from_column_slice(phi);
        let e = p.dot(&self.theta0) - reward;
        self.inv.add(&p)?;
        self.v.axpy(e, &p, 1.0);
        self.vv += e * e;
        self.t += 1;
        Ok(())
    }

    /// `ln det(I + T_t / sigma^2)`.
    pub fn log_det(&self) -> f64 {
        self.inv.log_det_ratio()
    }

    pub fn radius_sq(&self) -> f64 {
        let s2 = self.params.sigma * self.params.sigma;
        let quad = (self.vv - self.v.dot(&(self.inv.inverse() * &self.v))).max(0.0);
        quad + s2 * self.log_det() + self.params.empty_radius_sq()
    }
}

/// `R_MM,t^2` for any mixture family, updated in `O(t^2)` per round.
///
/// The mixture's leading `t x t` block never changes as rounds are added, so
/// the Cholesky factor of `I + T_t / sigma^2` grows by one row per round, and
/// so do the forward-solved residuals `L^{-1} (mu - r)`.
#[derive(Debug, Clone)]
pub struct DenseRadius {
    params: ConfidenceParams,
    spec: MixtureSpec,
    state: MixtureState,
    rewards: Vec<f64>,
    rows: Vec<Vec<f64>>,
    z: Vec<f64>,
    quad: f64,
    log_det: f64,
}

impl DenseRadius {
    pub fn new(spec: MixtureSpec, params: ConfidenceParams) -> Result<Self> {
        if (spec.sigma - params.sigma).abs() > 1e-12 * params.sigma {
            return Err(Error::invalid("sigma", "mixture and confidence parameters disagree"));
        }
        Ok(Self {
            params,
            spec,
            state: MixtureState::new(),
            rewards: Vec::new(),
            rows: Vec::new(),
            z: Vec::new(),
            quad: 0.0,
            log_det: 0.0,
        })
    }

    pub fn rounds(&self) -> usize {
        self.rewards.len()
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn update(&mut self, phi: &[f64], reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let t = self.rewards.len();
        let previous = if self.spec.is_adaptive() { self.rewards.last().copied() } else { None };
        self.state.append(&self.spec, phi, previous)?;
        let s2 = self.params.sigma * self.params.sigma;
        let mut row = Vec::with_capacity(t + 1);
        let mut zt = self.state.mean()[t] - reward;
        for j in 0..t {
            let mut v = self.state.entry(t, j) / s2;
            for k in 0..j {
                v -= row[k] * self.rows[j][k];
            }
            let l = v / self.rows[j][j];
            zt -= l * self.z[j];
            row.push(l);
        }
        let pivot = 1.0 + self.state.entry(t, t) / s2 - row.iter().map(|l| l * l).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite("mixture covariance"));
        }
        let diag = pivot.sqrt();
        row.push(diag);
        let zt = zt / diag;
        self.rows.push(row);
        self.z.push(zt);
        self.quad += zt * zt;
        self.log_det += 2.0 * diag.ln();
        self.rewards.push(reward);
        Ok(())
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn radius_sq(&self) -> f64 {
        let s2 = self.params.sigma * self.params.sigma;
        self.quad + s2 * self.log_det + self.params.empty_radius_sq()
    }
}

/// Clamp for squared radii: tiny negatives become 0, larger ones are errors.
fn clamp_radius_sq(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value > -1e-6 * (scale + 1.0) {
        Ok(0.0)
    } else {
        Err(Error::InconsistentRadius { value })
    }
}

/// `R_AMM,t^2 = R_MM,t^2 + alpha B^2 - r^T r + b^T A^{-1} b`.
pub fn radius_amm_sq(gram: &GramState, r_mm_sq: f64) -> Result<f64> {
    if !r_mm_sq.is_finite() {
        return Err(Error::NonFinite("R_MM^2"));
    }
    let b = gram.b();
    let fit = b.dot(&(gram.a_inv() * b));
    let bb = gram.params().bound_b;
    let value = r_mm_sq + gram.alpha() * bb * bb - gram.rr() + fit;
    clamp_radius_sq(value, r_mm_sq)
}

pub fn radius_amm(gram: &GramState, r_mm_sq: f64) -> Result<f64> {
    radius_amm_sq(gram, r_mm_sq).map(f64::sqrt)
}

/// `R_OFUL,t = sigma sqrt(ln det(Phi^T Phi / alpha + I) + 2 ln(1/delta)) + sqrt(alpha) B`.
pub fn radius_oful(gram: &GramState) -> f64 {
    let p = gram.params();
    p.sigma * (gram.log_det_ratio() + 2.0 * p.log_inv_delta()).max(0.0).sqrt()
        + gram.alpha().sqrt() * p.bound_b
}

/// `R_AMM,t^2` in closed form for `N(0, c Phi Phi^T)` mixtures with `alpha = sigma^2/c`:
/// `sigma^2 (ln det(c Phi^T Phi / sigma^2 + I) + 2 ln(1/delta) + B^2/c)`.
pub fn radius_special_sq(gram: &GramState, c: f64) -> Result<f64> {
    check_positive("c", c)?;
    let p = gram.params();
    let s2 = p.sigma * p.sigma;
    if (gram.alpha() - s2 / c).abs() > 1e-12 * gram.alpha() {
        return Err(Error::invalid("alpha", format!("expected sigma^2/c = {}, got {}", s2 / c, gram.alpha())));
    }
    Ok(s2 * (gram.log_det_ratio() + 2.0 * p.log_inv_delta() + p.bound_b * p.bound_b / c))
}

pub fn radius_special(gram: &GramState, c: f64) -> Result<f64> {
    radius_special_sq(gram, c).map(f64::sqrt)
}

/// The confidence set `Theta_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSet {
    pub r_mm_sq: f64,
    pub bound_b: f64,
}

impl ConfidenceSet {
    pub fn new(r_mm_sq: f64, bound_b: f64) -> Result<Self> {
        if !(r_mm_sq.is_finite() && r_mm_sq >= 0.0) {
            return Err(Error::invalid("r_mm_sq", format!("must be finite and >= 0, got {r_mm_sq}")));
        }
        Ok(Self { r_mm_sq, bound_b })
    }

    pub fn r_mm(&self) -> f64 {
        self.r_mm_sq.sqrt()
    }

    pub fn contains(&self, gram: &GramState, theta: &DVector<f64>) -> bool {
        gram.residual_sq(theta) <= self.r_mm_sq && theta.norm() <= self.bound_b
    }
}
