//! Exact Gaussian filtering and smoothing for the linear Gaussian model.
//!
//! These routines are the reference the sampler is checked against. Updates
//! use the Joseph form so covariances stay symmetric positive definite after
//! many small batches.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{LgmSpec, StateObs};
use crate::error::{Error, Result};
use crate::linalg::{mvn_draw, psd_sqrt, symmetrize};

/// `mean ← A·mean`, `cov ← A·cov·Aᵀ + Σ`.
pub fn kalman_predict(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    spec: &LgmSpec,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = &spec.a * mean;
    let p = symmetrize(&(&spec.a * cov * spec.a.transpose() + &spec.sigma));
    (m, p)
}

/// Conditions `N(mean, cov)` on `y = H x + e`, `e ~ N(0, R)`. An empty batch
/// returns the input unchanged.
pub fn kalman_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if h.nrows() == 0 {
        return Ok((mean.clone(), cov.clone()));
    }
    let s = symmetrize(&(h * cov * h.transpose() + r));
    let chol = nalgebra::Cholesky::new(s)
        .ok_or_else(|| Error::Numerical("innovation covariance is singular".into()))?;
    // K = P Hᵀ S⁻¹, computed as (S⁻¹ H P)ᵀ.
    let k = chol.solve(&(h * cov)).transpose();
    let innovation = y - h * mean;
    let m = mean + &k * innovation;
    let i_kh = DMatrix::identity(cov.nrows(), cov.ncols()) - &k * h;
    let p = symmetrize(&(&i_kh * cov * i_kh.transpose() + &k * r * k.transpose()));
    Ok((m, p))
}

/// Rows of `B`, observations and noise block for one state's revealed data.
fn observation_block(spec: &LgmSpec, obs: &StateObs) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let q = obs.rows.len();
    let h = DMatrix::from_fn(q, spec.d(), |i, j| spec.b[(obs.rows[i], j)]);
    let y = DVector::from_column_slice(&obs.y);
    let r = DMatrix::from_fn(q, q, |i, j| spec.xi[(obs.rows[i], obs.rows[j])]);
    (h, y, r)
}

/// Forward pass over states `1..=t`, keeping what the smoother and the
/// backward sampler need.
#[derive(Debug, Clone)]
pub struct KalmanRun {
    /// `p(x_s | data up to s)`.
    pub filtered: Vec<(DVector<f64>, DMatrix<f64>)>,
    /// `p(x_s | data up to s−1)`; for `s = 1` this is the prior of `x_1`.
    pub predicted: Vec<(DVector<f64>, DMatrix<f64>)>,
}

/// Runs the filter over the revealed data, one state per entry of `obs`.
/// The first state has prior `N(μ₀, Σ₀)`.
pub fn kalman_filter(spec: &LgmSpec, obs: &[StateObs]) -> Result<KalmanRun> {
    let mut filtered = Vec::with_capacity(obs.len());
    let mut predicted = Vec::with_capacity(obs.len());
    for (s, o) in obs.iter().enumerate() {
        let prior = if s == 0 {
            (spec.mu0.clone(), spec.sigma0.clone())
        } else {
            let (m, p) = &filtered[s - 1];
            kalman_predict(m, p, spec)
        };
        let (h, y, r) = observation_block(spec, o);
        let post = kalman_update(&prior.0, &prior.1, &h, &y, &r)?;
        predicted.push(prior);
        filtered.push(post);
    }
    Ok(KalmanRun {
        filtered,
        predicted,
    })
}

impl KalmanRun {
    fn gain(&self, spec: &LgmSpec, s: usize) -> Result<DMatrix<f64>> {
        // G = P_s Aᵀ P_{s+1|s}⁻¹ = (P_{s+1|s}⁻¹ A P_s)ᵀ.
        let pred = &self.predicted[s + 1].1;
        let chol = nalgebra::Cholesky::new(symmetrize(pred))
            .ok_or_else(|| Error::Numerical("predicted covariance is singular".into()))?;
        Ok(chol.solve(&(&spec.a * &self.filtered[s].1)).transpose())
    }

    /// Rauch-Tung-Striebel smoother: marginals `p(x_s | all revealed data)`.
    pub fn smooth(&self, spec: &LgmSpec) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
        let t = self.filtered.len();
        let mut out = self.filtered.clone();
        for s in (0..t.saturating_sub(1)).rev() {
            let g = self.gain(spec, s)?;
            let (pm, pp) = &self.predicted[s + 1];
            let (nm, np) = out[s + 1].clone();
            let (fm, fp) = &self.filtered[s];
            let m = fm + &g * (nm - pm);
            let p = symmetrize(&(fp + &g * (np - pp) * g.transpose()));
            out[s] = (m, p);
        }
        Ok(out)
    }

    /// One exact joint posterior draw of `x_{1:t}` by forward filtering,
    /// backward sampling.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        spec: &LgmSpec,
        rng: &mut R,
    ) -> Result<Vec<DVector<f64>>> {
        let t = self.filtered.len();
        let mut xs = vec![DVector::zeros(spec.d()); t];
        if t == 0 {
            return Ok(xs);
        }
        let (m, p) = &self.filtered[t - 1];
        xs[t - 1] = mvn_draw(m, &psd_sqrt(p, "filtered covariance")?, rng);
        for s in (0..t - 1).rev() {
            let g = self.gain(spec, s)?;
            let (fm, fp) = &self.filtered[s];
            let (pm, pp) = &self.predicted[s + 1];
            let mean = fm + &g * (&xs[s + 1] - pm);
            let cov = symmetrize(&(fp - &g * pp * g.transpose()));
            xs[s] = mvn_draw(&mean, &psd_sqrt(&cov, "backward covariance")?, rng);
        }
        Ok(xs)
    }
}

/// Smoothed means and marginal standard deviations, flattened in the same
/// layout as a sampler trajectory.
pub fn posterior_moments(spec: &LgmSpec, obs: &[StateObs]) -> Result<(Vec<f64>, Vec<f64>)> {
    let smoothed = kalman_filter(spec, obs)?.smooth(spec)?;
    let mut mean = Vec::new();
    let mut sd = Vec::new();
    for (m, p) in &smoothed {
        mean.extend(m.iter());
        sd.extend(p.diagonal().iter().map(|v| v.max(0.0).sqrt()));
    }
    Ok((mean, sd))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn conjugate_scalar_update() {
        let (m, p) = kalman_update(
            &DVector::from_element(1, 0.0),
            &scalar(1.0),
            &scalar(1.0),
            &DVector::from_element(1, 2.0),
            &scalar(1.0),
        )
        .unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15 && (p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_update_is_identity() {
        let m = DVector::from_vec(vec![1.0, 2.0]);
        let p = DMatrix::identity(2, 2);
        let (m2, p2) = kalman_update(
            &m,
            &p,
            &DMatrix::zeros(0, 2),
            &DVector::zeros(0),
            &DMatrix::zeros(0, 0),
        )
        .unwrap();
        assert_eq!((m2, p2), (m, p));
    }

    #[test]
    fn sequential_equals_joint() {
        let m = DVector::from_vec(vec![0.3, -0.2]);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.5, 1.5]);
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.4]));
        let (mj, pj) = kalman_update(&m, &p, &h, &y, &r).unwrap();
        let (m1, p1) = kalman_update(
            &m,
            &p,
            &h.rows(0, 1).into(),
            &y.rows(0, 1).into(),
            &scalar(0.1),
        )
        .unwrap();
        let (m2, p2) = kalman_update(
            &m1,
            &p1,
            &h.rows(1, 1).into(),
            &y.rows(1, 1).into(),
            &scalar(0.4),
        )
        .unwrap();
        assert!((mj - m2).norm() < 1e-10 && (pj - p2).norm() < 1e-10);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let r = kalman_update(
            &DVector::zeros(1),
            &scalar(0.0),
            &scalar(1.0),
            &DVector::zeros(1),
            &scalar(0.0),
        );
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
