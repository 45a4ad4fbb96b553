//! Gaussian mixture distributions `N(mu_t, T_t)` over reward-vector
//! predictions.
//!
//! A [`MixtureState`] grows by one element of `mu_t` and one row/column of
//! `T_t` per round. Appends never rewrite earlier entries, so the first
//! `t - 1` entries of `mu_t` and the leading `(t-1) x (t-1)` block of `T_t`
//! are bit-identical to the previous state.
//!
//! Mean and kernel functions are evaluated on feature vectors `phi(a)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, check_positive, Error, Result};
use crate::linalg::dot;

pub type CustomMean = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type CustomKernel = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MeanFunction {
    Zero,
    Constant(f64),
    /// `m(phi) = phi^T theta0`.
    Linear(Vec<f64>),
    Custom(CustomMean),
}

impl MeanFunction {
    pub fn eval(&self, phi: &[f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
            MeanFunction::Linear(theta0) => dot(phi, theta0),
            MeanFunction::Custom(f) => f(phi),
        }
    }
}

impl fmt::Debug for MeanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFunction::Zero => write!(f, "Zero"),
            MeanFunction::Constant(c) => write!(f, "Constant({c})"),
            MeanFunction::Linear(t) => write!(f, "Linear({t:?})"),
            MeanFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone)]
pub enum KernelFunction {
    /// `k(phi, phi') = scale * phi^T phi'`.
    Linear { scale: f64 },
    /// `k(phi, phi') = variance * exp(-|phi - phi'|^2 / (2 lengthscale^2))`.
    Rbf { lengthscale: f64, variance: f64 },
    Custom(CustomKernel),
}

impl KernelFunction {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelFunction::Linear { scale } => scale * dot(a, b),
            KernelFunction::Rbf { lengthscale, variance } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                variance * (-sq / (2.0 * lengthscale * lengthscale)).exp()
            }
            KernelFunction::Custom(k) => k(a, b),
        }
    }
}

impl fmt::Debug for KernelFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFunction::Linear { scale } => write!(f, "Linear {{ scale: {scale} }}"),
            KernelFunction::Rbf { lengthscale, variance } => {
                write!(f, "Rbf {{ lengthscale: {lengthscale}, variance: {variance} }}")
            }
            KernelFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MixtureFamily {
    /// `N(0, c Phi Phi^T)`.
    Standard { c: f64 },
    /// `N(Phi theta0, Phi Sigma0 Phi^T)` with `Sigma0` symmetric positive definite.
    Linear { theta0: Vec<f64>, sigma0: DMatrix<f64> },
    /// `mu_t = [m(a_i)]`, `T_t = [k(a_i, a_j)]`.
    MeanKernel { mean: MeanFunction, kernel: KernelFunction },
    /// GP-posterior style updates of a base `(m, k)` with noise level `beta`.
    Adaptive { mean: MeanFunction, kernel: KernelFunction, beta: f64 },
}

/// Mixture family plus the declared sub-Gaussian noise level `sigma`.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub family: MixtureFamily,
    pub sigma: f64,
}

impl MixtureSpec {
    pub fn standard(c: f64, sigma: f64) -> Result<Self> {
        check_positive("c", c)?;
        check_positive("sigma", sigma)?;
        Ok(Self { family: MixtureFamily::Standard { c }, sigma })
    }

    pub fn linear(theta0: Vec<f64>, sigma0: DMatrix<f64>, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_len(theta0.len(), sigma0.nrows())?;
        check_len(theta0.len(), sigma0.ncols())?;
        check_finite("theta0", &theta0)?;
        check_finite("sigma0", sigma0.as_slice())?;
        if (&sigma0 - sigma0.transpose()).amax() > 1e-12 * sigma0.amax().max(1.0) {
            return Err(Error::invalid("sigma0", "must be symmetric"));
        }
        if sigma0.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("sigma0"));
        }
        Ok(Self { family: MixtureFamily::Linear { theta0, sigma0 }, sigma })
    }

    pub fn mean_kernel(mean: MeanFunction, kernel: KernelFunction, sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(Self { family: MixtureFamily::MeanKernel { mean, kernel }, sigma })
    }

    /// Adaptive family; `beta` defaults to `4 sigma^2`.
    pub fn adaptive(
        mean: MeanFunction,
        kernel: KernelFunction,
        beta: Option<f64>,
        sigma: f64,
    ) -> Result<Self> {
        check_positive("sigma", sigma)?;
        let beta = beta.unwrap_or(4.0 * sigma * sigma);
        check_positive("beta", beta)?;
        Ok(Self { family: MixtureFamily::Adaptive { mean, kernel, beta }, sigma })
    }

    /// `(theta0, Sigma0)` for families whose covariance is `Phi Sigma0 Phi^T`.
    pub fn linear_parameters(&self, d: usize) -> Option<(Vec<f64>, DMatrix<f64>)> {
        match &self.family {
            MixtureFamily::Standard { c } => Some((vec![0.0; d], DMatrix::identity(d, d) * *c)),
            MixtureFamily::Linear { theta0, sigma0 } => Some((theta0.clone(), sigma0.clone())),
            _ => None,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.family, MixtureFamily::Adaptive { .. })
    }
}

const STATE_VERSION: u32 = 1;

/// `(mu_t, T_t)` together with the history needed to extend them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    version: u32,
    features: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    mu: Vec<f64>,
    /// Row `i` holds `T[i][0..=i]`.
    rows: Vec<Vec<f64>>,
    /// Adaptive family only: base means `m(a_i)`.
    base_means: Vec<f64>,
    /// Adaptive family only: Cholesky factor rows of `K + beta I`.
    chol: Vec<Vec<f64>>,
}

impl MixtureState {
    pub fn new() -> Self {
        Self { version: STATE_VERSION, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.rows[i][j]
        } else {
            self.rows[j][i]
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mixture states always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let state: MixtureState =
            serde_json::from_str(s).map_err(|e| Error::invalid("mixture state", e.to_string()))?;
        if state.version != STATE_VERSION {
            return Err(Error::invalid("version", format!("unsupported state version {}", state.version)));
        }
        Ok(state)
    }

    /// Appends round `t = len + 1` with features `phi(a_t)`.
    ///
    /// The adaptive family needs the reward `r_{t-1}` of the previous round for
    /// every `t >= 2`; other families ignore `previous_reward`.
    pub fn append(&mut self, spec: &MixtureSpec, phi: &[f64], previous_reward: Option<f64>) -> Result<()> {
        check_finite("features", phi)?;
        if let Some(first) = self.features.first() {
            check_len(first.len(), phi.len())?;
        }
        if let Some(r) = previous_reward {
            if !r.is_finite() {
                return Err(Error::NonFinite("reward"));
            }
        }
        let n = self.len();
        let (mu_new, row) = match &spec.family {
            MixtureFamily::Standard { c } => {
                let scaled: Vec<f64> = phi.iter().map(|x| c * x).collect();
                (0.0, self.linear_row(phi, &scaled))
            }
            MixtureFamily::Linear { theta0, sigma0 } => {
                check_len(theta0.len(), phi.len())?;
                let scaled: Vec<f64> = (0..phi.len())
                    .map(|k| {
                        let mut s = 0.0;
                        for (j, p) in phi.iter().enumerate() {
                            s += sigma0[(k, j)] * p;
                        }
                        s
                    })
                    .collect();
                (dot(phi, theta0), self.linear_row(phi, &scaled))
            }
            MixtureFamily::MeanKernel { mean, kernel } => {
                let mut row: Vec<f64> = self.features.iter().map(|f| kernel.eval(f, phi)).collect();
                row.push(kernel.eval(phi, phi));
                (mean.eval(phi), row)
            }
            MixtureFamily::Adaptive { mean, kernel, beta } => {
                match (n, previous_reward) {
                    (0, Some(_)) => return Err(Error::UnexpectedReward("no previous round exists")),
                    (0, None) => {}
                    (_, Some(r)) => self.rewards.push(r),
                    (_, None) => return Err(Error::MissingReward),
                }
                return self.append_adaptive(mean, kernel, *beta, phi);
            }
        };
        check_finite("mixture entries", &row)?;
        if !mu_new.is_finite() {
            return Err(Error::NonFinite("mixture mean"));
        }
        self.features.push(phi.to_vec());
        self.mu.push(mu_new);
        self.rows.push(row);
        Ok(())
    }

    fn linear_row(&self, phi: &[f64], scaled: &[f64]) -> Vec<f64> {
        let mut row: Vec<f64> = self.features.iter().map(|f| dot(f, scaled)).collect();
        row.push(dot(phi, scaled));
        row
    }

    fn append_adaptive(&mut self, mean: &MeanFunction, kernel: &KernelFunction, beta: f64, phi: &[f64]) -> Result<()> {
        let n = self.len();
        let kvec: Vec<f64> = self.features.iter().map(|f| kernel.eval(f, phi)).collect();
        let kself = kernel.eval(phi, phi);
        let m_new = mean.eval(phi);

        // y = L^{-1} k, w = (K + beta I)^{-1} k.
        let y = self.forward(&kvec);
        let w = self.backward(&y);

        // k_{t-1}(a_i, a_t) = k(a_i, a_t) - [K (K + beta I)^{-1} k]_i = beta * w_i.
        let mut row: Vec<f64> = w.iter().map(|wi| beta * wi).collect();
        row.push(kself - dot(&kvec, &w));

        let residual: Vec<f64> = self.base_means.iter().zip(&self.rewards).map(|(m, r)| m - r).collect();
        debug_assert_eq!(residual.len(), n);
        let mu_new = m_new - dot(&w, &residual);

        let pivot = kself + beta - dot(&y, &y);
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite("adaptive kernel matrix"));
        }
        check_finite("mixture entries", &row)?;
        if !mu_new.is_finite() {
            return Err(Error::NonFinite("mixture mean"));
        }
        let mut lrow = y;
        lrow.push(pivot.sqrt());
        self.chol.push(lrow);
        self.base_means.push(m_new);
        self.features.push(phi.to_vec());
        self.mu.push(mu_new);
        self.rows.push(row);
        Ok(())
    }

    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(b.len());
        for (i, bi) in b.iter().enumerate() {
            let row = &self.chol[i];
            let s = bi - dot(&row[..i], &y);
            y.push(s / row[i]);
        }
        y
    }

    fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.chol[j][i] * xj;
            }
            x[i] = s / self.chol[i][i];
        }
        x
    }
}

/// Batch construction from a full history; identical to sequential appends.
///
/// `rewards` may hold one entry per action or one fewer (the final reward is
/// never needed to build `(mu_t, T_t)`).
pub fn mixture_dense(spec: &MixtureSpec, features: &[Vec<f64>], rewards: &[f64]) -> Result<MixtureState> {
    let t = features.len();
    if rewards.len() != t && rewards.len() + 1 != t.max(1) {
        return Err(Error::DimensionMismatch { expected: t, actual: rewards.len() });
    }
    let mut state = MixtureState::new();
    for (i, phi) in features.iter().enumerate() {
        let prev = if i == 0 || !spec.is_adaptive() { None } else { Some(rewards[i - 1]) };
        state.append(spec, phi, prev)?;
    }
    Ok(state)
}
