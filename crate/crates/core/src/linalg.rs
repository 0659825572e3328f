//! Small dense-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| {
            (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= SYMMETRY_TOL * (1.0 + m[(i, j)].abs()))
        })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// A matrix `S` with `S Sᵀ = m` for symmetric positive semi-definite `m`.
/// Uses Cholesky when possible and an eigen-decomposition otherwise, so
/// singular covariances (e.g. zero noise) are allowed.
pub fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !is_symmetric(m) {
        return Err(Error::Numerical(format!("{what} is not symmetric")));
    }
    if let Some(c) = nalgebra::Cholesky::new(symmetrize(m)) {
        return Ok(c.l());
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-10 * scale {
            return Err(Error::Numerical(format!(
                "{what} is not positive semi-definite"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Draw from `N(mean, S Sᵀ)`.
pub fn mvn_draw<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    sqrt: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    mean + sqrt * standard_normal_vector(sqrt.ncols(), rng)
}
