//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue tolerance below which a nominally PSD matrix is rejected.
pub const PSD_TOLERANCE: f64 = 1e-8;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cholesky(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(what))
}

/// Projects a symmetric matrix that should be PSD onto the PSD cone.
///
/// Eigenvalues down to `-PSD_TOLERANCE * trace / n` are treated as rounding
/// noise and clamped to zero; anything more negative is an error.
pub fn clamp_psd(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let floor = -PSD_TOLERANCE * scale;
    if eig.eigenvalues.iter().any(|&l| l < floor || !l.is_finite()) {
        return Err(Error::NotPositiveDefinite(what));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose())
}

/// Cholesky of `I + m / scale` where `m` is PSD up to rounding.
pub fn cholesky_identity_plus(
    m: &DMatrix<f64>,
    scale: f64,
    what: &'static str,
) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let build = |t: &DMatrix<f64>| DMatrix::identity(n, n) + t / scale;
    match Cholesky::new(build(m)) {
        Some(c) => Ok(c),
        None => cholesky(build(&clamp_psd(m, what)?), what),
    }
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// `v^T M^{-1} v` given the Cholesky factor of `M`.
pub fn inv_quad(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let l = chol.l();
    match l.solve_lower_triangular(v) {
        Some(y) => y.norm_squared(),
        None => f64::NAN,
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
