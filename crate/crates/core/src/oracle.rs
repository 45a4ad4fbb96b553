//! Independent reference computations used to check the fast paths.
//!
//! Nothing here is on a hot path. The routines solve the same problems as
//! [`crate::ucb`] and [`crate::confidence`] by unrelated means: a primal
//! log-barrier method for the UCB program, Monte-Carlo integration for the
//! mixture radius, and rejection sampling of feasible parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::confidence::{ConfidenceParams, GramState};
use crate::error::{check_len, Error, Result};
use crate::rng::SeededRng;

/// The program `max phi^T theta` over `theta^T G theta - 2 b^T theta + rr <= R^2`
/// and `|theta|^2 <= B^2`, given by its sufficient statistics.
#[derive(Debug, Clone)]
pub struct UcbProgram {
    pub gram: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rr: f64,
    pub r_mm_sq: f64,
    pub bound_b: f64,
}

impl UcbProgram {
    pub fn from_state(state: &GramState, r_mm_sq: f64, bound_b: f64) -> Self {
        Self { gram: state.gram().clone(), b: state.b().clone(), rr: state.rr(), r_mm_sq, bound_b }
    }

    fn residual_slack(&self, theta: &DVector<f64>) -> f64 {
        self.r_mm_sq - (theta.dot(&(&self.gram * theta)) - 2.0 * self.b.dot(theta) + self.rr)
    }

    fn ball_slack(&self, theta: &DVector<f64>) -> f64 {
        self.bound_b * self.bound_b - theta.norm_squared()
    }

    pub fn is_feasible(&self, theta: &DVector<f64>) -> bool {
        self.residual_slack(theta) >= 0.0 && self.ball_slack(theta) >= 0.0
    }

    /// A strictly feasible point on the ridge path, if one exists.
    ///
    /// The ridge solutions trace the trade-off curve between the residual and
    /// the norm, so scanning them finds an interior point whenever there is one.
    pub fn interior_point(&self) -> Option<DVector<f64>> {
        let d = self.b.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut check = |theta: DVector<f64>| {
            let s = (self.residual_slack(&theta) / self.r_mm_sq.max(1e-300))
                .min(self.ball_slack(&theta) / (self.bound_b * self.bound_b).max(1e-300));
            if s > 0.0 && best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                best = Some((s, theta));
            }
        };
        check(DVector::zeros(d));
        for i in 0..=400 {
            let alpha = 10f64.powf(-10.0 + 22.0 * i as f64 / 400.0);
            let a = &self.gram + DMatrix::identity(d, d) * alpha;
            if let Some(chol) = a.cholesky() {
                check(chol.solve(&self.b));
            }
        }
        best.map(|(_, t)| t)
    }

    /// Maximizes `phi^T theta` with a primal log-barrier Newton method.
    /// Returns `None` when no strictly feasible point is found.
    pub fn solve(&self, phi: &[f64], tolerance: f64) -> Result<Option<f64>> {
        check_len(self.b.len(), phi.len())?;
        let Some(mut theta) = self.interior_point() else {
            return Ok(None);
        };
        let d = self.b.len();
        let c = DVector::from_column_slice(phi);
        if c.norm() == 0.0 {
            return Ok(Some(0.0));
        }
        let objective = |theta: &DVector<f64>, tau: f64| -> f64 {
            let s1 = self.residual_slack(theta);
            let s2 = self.ball_slack(theta);
            if s1 <= 0.0 || s2 <= 0.0 {
                f64::INFINITY
            } else {
                -tau * c.dot(theta) - s1.ln() - s2.ln()
            }
        };
        let mut tau = 1.0 / (c.norm() * self.bound_b.max(1.0));
        loop {
            for _ in 0..200 {
                let s1 = self.residual_slack(&theta);
                let s2 = self.ball_slack(&theta);
                let g1 = (&self.gram * &theta - &self.b) * 2.0;
                let g2 = &theta * 2.0;
                let grad = -&c * tau + &g1 / s1 + &g2 / s2;
                let hess = &g1 * g1.transpose() / (s1 * s1)
                    + &self.gram * (2.0 / s1)
                    + &g2 * g2.transpose() / (s2 * s2)
                    + DMatrix::identity(d, d) * (2.0 / s2);
                let Some(chol) = hess.cholesky() else { break };
                let step = -chol.solve(&grad);
                let decrement = -grad.dot(&step);
                if decrement < 1e-14 {
                    break;
                }
                let f0 = objective(&theta, tau);
                let mut t = 1.0;
                while t > 1e-16 {
                    let cand = &theta + &step * t;
                    if objective(&cand, tau) <= f0 - 0.25 * t * decrement {
                        theta = cand;
                        break;
                    }
                    t *= 0.5;
                }
                if t <= 1e-16 {
                    break;
                }
            }
            let value = c.dot(&theta);
            // Duality gap of the barrier problem: (number of constraints) / tau.
            if 2.0 / tau <= tolerance * value.abs().max(1.0) {
                return Ok(Some(value));
            }
            tau *= 10.0;
            if tau > 1e18 {
                return Ok(Some(value));
            }
        }
    }
}

/// `R_MM^2` by Monte-Carlo integration of `exp(-|f - r|^2 / 2 sigma^2)`
/// over `f ~ N(mu, T)`. Returns `(estimate, standard error)`; the standard
/// error comes from the delta method on the log.
pub fn mc_radius_sq(
    mu: &[f64],
    t_mat: &DMatrix<f64>,
    rewards: &[f64],
    params: &ConfidenceParams,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    let t = mu.len();
    check_len(t, rewards.len())?;
    check_len(t, t_mat.nrows())?;
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2"));
    }
    let s2 = params.sigma * params.sigma;
    let eig = SymmetricEigen::new((t_mat + t_mat.transpose()) * 0.5);
    if eig.eigenvalues.iter().any(|&l| l < -1e-8 * (1.0 + t_mat.trace().abs())) {
        return Err(Error::NotPositiveDefinite("mixture covariance"));
    }
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let offset = DVector::from_iterator(t, mu.iter().zip(rewards).map(|(m, r)| m - r));

    let mut exponents = Vec::with_capacity(samples);
    let mut z = DVector::zeros(t);
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = rng.normal();
        }
        let f = &offset + &root * &z;
        exponents.push(-f.norm_squared() / (2.0 * s2));
    }
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = exponents.iter().map(|e| (e - m).exp()).collect();
    let n = samples as f64;
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let estimate = -2.0 * s2 * (mean.ln() + m) + params.empty_radius_sq();
    Ok((estimate, 2.0 * s2 * se_mean / mean))
}

/// Uniform samples from the ball `|theta| <= B` that satisfy the residual
/// constraint. Draws at most `attempts` candidates.
pub fn sample_feasible(program: &UcbProgram, attempts: usize, rng: &mut SeededRng) -> Vec<DVector<f64>> {
    let d = program.b.len();
    let mut out = Vec::new();
    for _ in 0..attempts {
        let dir = DVector::from_vec(rng.normal_vec(d));
        let n = dir.norm();
        if n == 0.0 {
            continue;
        }
        let radius = program.bound_b * rng.uniform().powf(1.0 / d as f64);
        let theta = dir * (radius / n);
        if program.is_feasible(&theta) {
            out.push(theta);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::radius_mm_naive;

    fn params() -> ConfidenceParams {
        ConfidenceParams::new(1.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn ball_only_program() {
        let p = UcbProgram {
            gram: DMatrix::zeros(2, 2),
            b: DVector::zeros(2),
            rr: 0.0,
            r_mm_sq: 1.0,
            bound_b: 2.0,
        };
        let v = p.solve(&[3.0, 4.0], 1e-10).unwrap().unwrap();
        assert!((v - 10.0).abs() < 1e-8);
    }

    #[test]
    fn residual_only_program() {
        // theta in [0.5, 1.5] from |theta - 1| <= 0.5 with a loose ball.
        let p = UcbProgram {
            gram: DMatrix::from_element(1, 1, 1.0),
            b: DVector::from_element(1, 1.0),
            rr: 1.0,
            r_mm_sq: 0.25,
            bound_b: 10.0,
        };
        assert!((p.solve(&[1.0], 1e-10).unwrap().unwrap() - 1.5).abs() < 1e-8);
        assert!((p.solve(&[-1.0], 1e-10).unwrap().unwrap() + 0.5).abs() < 1e-8);
    }

    #[test]
    fn infeasible_program() {
        let p = UcbProgram {
            gram: DMatrix::from_element(1, 1, 1.0),
            b: DVector::from_element(1, 5.0),
            rr: 25.0,
            r_mm_sq: 1.0,
            bound_b: 1.0,
        };
        assert!(p.solve(&[1.0], 1e-10).unwrap().is_none());
    }

    #[test]
    fn monte_carlo_matches_closed_form_one_dim() {
        let mut rng = SeededRng::new(4);
        let t = DMatrix::from_element(1, 1, 1.0);
        let (est, se) = mc_radius_sq(&[0.0], &t, &[0.0], &ConfidenceParams::new(1.0, 1.0, 0.5).unwrap(), 200_000, &mut rng)
            .unwrap();
        assert!((est - 3.0 * 2f64.ln()).abs() < 4.0 * se, "{est} +- {se}");
    }

    #[test]
    fn monte_carlo_handles_singular_covariance() {
        let mut rng = SeededRng::new(8);
        let phi = DMatrix::from_row_slice(3, 1, &[1.0, 0.5, -0.5]);
        let t = &phi * phi.transpose();
        let mu = [0.1, 0.0, 0.3];
        let r = [0.5, -0.2, 0.1];
        let exact = radius_mm_naive(&mu, &t, &r, &params()).unwrap();
        let (est, se) = mc_radius_sq(&mu, &t, &r, &params(), 200_000, &mut rng).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "{est} vs {exact} (se {se})");
    }

    #[test]
    fn feasible_samples_satisfy_constraints() {
        let p = UcbProgram {
            gram: DMatrix::identity(2, 2),
            b: DVector::from_vec(vec![0.5, 0.0]),
            rr: 0.3,
            r_mm_sq: 0.5,
            bound_b: 1.0,
        };
        let mut rng = SeededRng::new(1);
        let pts = sample_feasible(&p, 2000, &mut rng);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|t| p.is_feasible(t)));
    }
}
