//! Linear Gaussian state-space model.
//!
//! ```text
//! X_1 ~ N(μ₀, Σ₀)
//! X_t = A X_{t−1} + Φ_t,   Φ_t ~ N(0, Σ)
//! Y_t = B X_t + Ψ_t,       Ψ_t ~ N(0, Ξ)
//! ```
//!
//! A sample is the whole trajectory `x_{1:t}` flattened state by state. The
//! rows of `Y_t` are revealed a batch at a time; opening state `t + 1`
//! extends every stored trajectory by one draw from the state equation.

pub mod kalman;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::fixtures::double_round_robin_flat;
use crate::linalg::{cholesky_lower, is_symmetric, mvn_draw, psd_sqrt, standard_normal_vector};
use crate::target::{ModelPlugin, SampleKey, TargetStep};

pub use kalman::{kalman_filter, kalman_predict, kalman_update, posterior_moments, KalmanRun};

#[derive(Debug, Clone, PartialEq)]
pub struct LgmSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// Observation noise covariance; must be diagonal.
    pub xi: DMatrix<f64>,
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
}

impl LgmSpec {
    /// Checks shapes and that every covariance is symmetric positive
    /// semi-definite. `Ξ` must be diagonal: observations within a state are
    /// conditionally independent, which is what lets a batch's likelihood be
    /// a sum over its rows.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma: DMatrix<f64>,
        xi: DMatrix<f64>,
        mu0: DVector<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        let m = b.nrows();
        let shape_ok = a.is_square()
            && b.ncols() == d
            && sigma.shape() == (d, d)
            && xi.shape() == (m, m)
            && mu0.len() == d
            && sigma0.shape() == (d, d);
        if !shape_ok || d == 0 {
            return Err(Error::Config(
                "inconsistent linear Gaussian model dimensions".into(),
            ));
        }
        for (what, cov) in [("Sigma", &sigma), ("Xi", &xi), ("Sigma0", &sigma0)] {
            if !is_symmetric(cov) {
                return Err(Error::Config(format!("{what} is not symmetric")));
            }
            psd_sqrt(cov, what).map_err(|e| Error::Config(e.to_string()))?;
        }
        if (0..m).any(|i| (0..m).any(|j| i != j && xi[(i, j)] != 0.0)) {
            return Err(Error::Config("Xi must be diagonal".into()));
        }
        Ok(Self {
            a,
            b,
            sigma,
            xi,
            mu0,
            sigma0,
        })
    }

    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    /// Observation matrix shaped like a league: one row per match of a double
    /// round robin, 2 in the home team's column and 1 in the away team's.
    pub fn league_design(teams: usize) -> DMatrix<f64> {
        let games = double_round_robin_flat(teams);
        let mut b = DMatrix::zeros(games.len(), teams);
        for (r, (h, a)) in games.into_iter().enumerate() {
            b[(r, h)] = 2.0;
            b[(r, a)] = 1.0;
        }
        b
    }

    /// `A = 0.7(I − 11ᵀ/d)`, `Σ = 0.05 I`, `Ξ = 0.02 I`, `μ₀ = 0`, `Σ₀ = I`,
    /// with the league design for `teams = d` teams.
    pub fn league(teams: usize) -> Self {
        let d = teams;
        let centering = DMatrix::identity(d, d) - DMatrix::from_element(d, d, 1.0 / d as f64);
        let b = Self::league_design(d);
        let m = b.nrows();
        Self::new(
            centering * 0.7,
            b,
            DMatrix::identity(d, d) * 0.05,
            DMatrix::identity(m, m) * 0.02,
            DVector::zeros(d),
            DMatrix::identity(d, d),
        )
        .expect("league preset is valid")
    }

    /// Twenty teams, 380 observations per state.
    pub fn twenty_teams() -> Self {
        Self::league(20)
    }

    /// Five teams, 20 observations per state.
    pub fn desk() -> Self {
        Self::league(5)
    }
}

/// Draws `T` states and their full observation vectors.
pub fn lgm_simulate<R: Rng + ?Sized>(
    spec: &LgmSpec,
    t: usize,
    rng: &mut R,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if t == 0 {
        return Err(contract("simulate at least one state"));
    }
    let s0 = psd_sqrt(&spec.sigma0, "Sigma0")?;
    let s = psd_sqrt(&spec.sigma, "Sigma")?;
    let xi = psd_sqrt(&spec.xi, "Xi")?;
    let mut states = Vec::with_capacity(t);
    let mut obs = Vec::with_capacity(t);
    for i in 0..t {
        let x = if i == 0 {
            mvn_draw(&spec.mu0, &s0, rng)
        } else {
            mvn_draw(&(&spec.a * &states[i - 1]), &s, rng)
        };
        obs.push(mvn_draw(&(&spec.b * &x), &xi, rng));
        states.push(x);
    }
    Ok((states, obs))
}

/// Rows of `Y_s` revealed so far for one state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateObs {
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
}

/// One reveal. A batch with no rows opens state `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LgmBatch {
    pub t: u64,
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
}

/// `Σ_j log N(y_j; B_j x, Ξ_jj)` over the batch rows.
pub fn lgm_batch_loglik(x: &[f64], rows: &[usize], y: &[f64], spec: &LgmSpec) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    rows.iter()
        .zip(y)
        .map(|(&r, &yj)| {
            let mean: f64 = spec.b.row(r).iter().zip(x).map(|(b, x)| b * x).sum();
            let v = spec.xi[(r, r)];
            -0.5 * (ln_2pi + v.ln() + (yj - mean) * (yj - mean) / v)
        })
        .sum()
}

/// Appends `x_{t+1} ~ N(A x_t, Σ)` to a flattened trajectory, given a square
/// root of `Σ`.
pub fn lgm_transition<R: Rng + ?Sized>(
    trajectory: &[f64],
    spec: &LgmSpec,
    sigma_sqrt: &DMatrix<f64>,
    rng: &mut R,
) -> Vec<f64> {
    let d = spec.d();
    let last = DVector::from_column_slice(&trajectory[trajectory.len() - d..]);
    let next = mvn_draw(&(&spec.a * last), sigma_sqrt, rng);
    let mut out = trajectory.to_vec();
    out.extend(next.iter());
    out
}

/// Splits a full data set into the reveal sequence `(target, batch)`, state
/// by state, `batch_size` rows at a time. Target 1 (state 1 with no data) is
/// the starting point and has no entry.
pub fn reveal_schedule(obs: &[DVector<f64>], batch_size: usize) -> Vec<(TargetStep, LgmBatch)> {
    let mut out = Vec::new();
    let mut step = TargetStep::first();
    for (s, y) in obs.iter().enumerate() {
        let t = s as u64 + 1;
        if s > 0 {
            step = step.next_state();
            out.push((
                step,
                LgmBatch {
                    t,
                    rows: Vec::new(),
                    y: Vec::new(),
                },
            ));
        }
        let rows: Vec<usize> = (0..y.len()).collect();
        for chunk in rows.chunks(batch_size.max(1)) {
            step = step.next_batch();
            out.push((
                step,
                LgmBatch {
                    t,
                    rows: chunk.to_vec(),
                    y: chunk.iter().map(|&r| y[r]).collect(),
                },
            ));
        }
    }
    out
}

/// Gaussian full conditional of one state: precision factor and the linear
/// term that does not depend on neighbours.
#[derive(Debug, Clone)]
struct Conditional {
    /// Lower Cholesky factor of the conditional precision.
    l: DMatrix<f64>,
    /// Data part of the linear term, `Bᵀ Ξ⁻¹ y`.
    obs_lin: DVector<f64>,
}

/// The model at its current target, with the Gibbs sampler as MCMC kernel.
#[derive(Debug, Clone)]
pub struct Lgm {
    spec: LgmSpec,
    obs: Vec<StateObs>,
    step: TargetStep,
    sigma_inv: DMatrix<f64>,
    at_sigma_inv: DMatrix<f64>,
    at_sigma_inv_a: DMatrix<f64>,
    sigma0_inv: DMatrix<f64>,
    sigma0_inv_mu0: DVector<f64>,
    sigma_sqrt: DMatrix<f64>,
    cond: Vec<Conditional>,
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(crate::linalg::symmetrize(m))
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

impl Lgm {
    /// The model at target 1: state 1, nothing observed. `Σ`, `Σ₀` and `Ξ`
    /// must be positive definite.
    pub fn new(spec: LgmSpec) -> Result<Self> {
        let sigma_inv = spd_inverse(&spec.sigma, "Sigma")?;
        let sigma0_inv = spd_inverse(&spec.sigma0, "Sigma0")?;
        if spec.xi.diagonal().iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("Xi must be positive definite".into()));
        }
        let at_sigma_inv = spec.a.transpose() * &sigma_inv;
        let at_sigma_inv_a = &at_sigma_inv * &spec.a;
        let sigma0_inv_mu0 = &sigma0_inv * &spec.mu0;
        let sigma_sqrt = psd_sqrt(&spec.sigma, "Sigma")?;
        let mut model = Self {
            spec,
            obs: vec![StateObs::default()],
            step: TargetStep::first(),
            sigma_inv,
            at_sigma_inv,
            at_sigma_inv_a,
            sigma0_inv,
            sigma0_inv_mu0,
            sigma_sqrt,
            cond: Vec::new(),
        };
        model.refresh(0)?;
        Ok(model)
    }

    pub fn spec(&self) -> &LgmSpec {
        &self.spec
    }

    pub fn observations(&self) -> &[StateObs] {
        &self.obs
    }

    pub fn target(&self) -> TargetStep {
        self.step
    }

    pub fn states(&self) -> usize {
        self.obs.len()
    }

    /// Recomputes the cached conditionals of states `from..t` (0-based).
    fn refresh(&mut self, from: usize) -> Result<()> {
        let t = self.obs.len();
        self.cond.truncate(from);
        for s in from..t {
            let mut prec = if s == 0 {
                self.sigma0_inv.clone()
            } else {
                self.sigma_inv.clone()
            };
            if s + 1 < t {
                prec += &self.at_sigma_inv_a;
            }
            let d = self.spec.d();
            let mut obs_lin = DVector::zeros(d);
            for (&r, &y) in self.obs[s].rows.iter().zip(&self.obs[s].y) {
                let row = self.spec.b.row(r).transpose();
                let v = self.spec.xi[(r, r)];
                prec += &row * row.transpose() / v;
                obs_lin += &row * (y / v);
            }
            let l = cholesky_lower(&prec, "full conditional precision")?;
            self.cond.push(Conditional { l, obs_lin });
        }
        Ok(())
    }

    fn state<'a>(&self, traj: &'a [f64], s: usize) -> &'a [f64] {
        let d = self.spec.d();
        &traj[s * d..(s + 1) * d]
    }

    /// Mean and lower precision factor of `x_s | x_{−s}, y` (0-based `s`).
    pub fn full_conditional(&self, traj: &[f64], s: usize) -> (DVector<f64>, DMatrix<f64>) {
        let t = self.obs.len();
        let c = &self.cond[s];
        let mut h = c.obs_lin.clone();
        if s == 0 {
            h += &self.sigma0_inv_mu0;
        } else {
            let prev = DVector::from_column_slice(self.state(traj, s - 1));
            h += &self.sigma_inv * (&self.spec.a * prev);
        }
        if s + 1 < t {
            let next = DVector::from_column_slice(self.state(traj, s + 1));
            h += &self.at_sigma_inv * next;
        }
        let mean = solve_with_factor(&c.l, &h);
        (mean, c.l.clone())
    }

    /// One Gibbs step: redraw a uniformly chosen state from its full
    /// conditional.
    pub fn gibbs_step<R: Rng + ?Sized>(&self, traj: &mut [f64], rng: &mut R) {
        let t = self.obs.len();
        let d = self.spec.d();
        let s = rng.random_range(0..t);
        let c = &self.cond[s];
        let mut h = c.obs_lin.clone();
        if s == 0 {
            h += &self.sigma0_inv_mu0;
        } else {
            let prev = DVector::from_column_slice(&traj[(s - 1) * d..s * d]);
            h += &self.sigma_inv * (&self.spec.a * prev);
        }
        if s + 1 < t {
            let next = DVector::from_column_slice(&traj[(s + 1) * d..(s + 2) * d]);
            h.gemv(1.0, &self.at_sigma_inv, &next, 1.0);
        }
        let mean = solve_with_factor(&c.l, &h);
        let z = standard_normal_vector(d, rng);
        let noise =
            c.l.tr_solve_lower_triangular(&z)
                .expect("factor has a non-zero diagonal");
        for (i, v) in traj[s * d..(s + 1) * d].iter_mut().enumerate() {
            *v = mean[i] + noise[i];
        }
    }

    /// Prior mean trajectory for the current number of states.
    pub fn prior_mean(&self) -> Vec<f64> {
        let mut x = self.spec.mu0.clone();
        let mut out: Vec<f64> = x.iter().copied().collect();
        for _ in 1..self.obs.len() {
            x = &self.spec.a * x;
            out.extend(x.iter());
        }
        out
    }
}

/// Solves `L Lᵀ m = h`.
fn solve_with_factor(l: &DMatrix<f64>, h: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(h).expect("non-zero diagonal");
    l.tr_solve_lower_triangular(&y).expect("non-zero diagonal")
}

impl ModelPlugin for Lgm {
    type Batch = LgmBatch;

    fn dimension(&self) -> usize {
        self.spec.d() * self.obs.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.prior_mean()
    }

    fn mcmc_step<R: Rng + ?Sized>(&self, state: &mut Vec<f64>, rng: &mut R) -> Result<()> {
        if state.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: state.len(),
            });
        }
        self.gibbs_step(state, rng);
        Ok(())
    }

    fn log_incremental_weight(&self, value: &[f64], batch: &LgmBatch) -> Result<f64> {
        if batch.t as usize != self.obs.len() || batch.rows.is_empty() {
            return Err(contract(
                "weighting batch must hold rows of the current state",
            ));
        }
        let d = self.spec.d();
        let last = &value[value.len() - d..];
        Ok(lgm_batch_loglik(last, &batch.rows, &batch.y, &self.spec))
    }

    fn transition<R: Rng + ?Sized>(
        &self,
        value: &[f64],
        batch: &LgmBatch,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if batch.t as usize != self.obs.len() + 1 {
            return Err(contract("transition batch must open the next state"));
        }
        Ok(lgm_transition(value, &self.spec, &self.sigma_sqrt, rng))
    }

    fn advance(&mut self, step: &TargetStep, batch: LgmBatch) -> Result<()> {
        if !self.step.is_successor(step) || batch.t != step.t {
            return Err(contract(format!(
                "model at target {} cannot absorb a batch for target {} (state {})",
                self.step.n, step.n, batch.t
            )));
        }
        if batch.rows.iter().any(|&r| r >= self.spec.m()) || batch.rows.len() != batch.y.len() {
            return Err(contract("batch rows out of range"));
        }
        if step.requires_transition {
            self.obs.push(StateObs::default());
            let t = self.obs.len();
            // State t−1 gains a successor; state t is new.
            self.refresh(t - 2)?;
        } else {
            let s = self.obs.len() - 1;
            self.obs[s].rows.extend(&batch.rows);
            self.obs[s].y.extend(&batch.y);
            self.refresh(s)?;
        }
        self.step = *step;
        Ok(())
    }

    fn estimand(&self, value: &[f64], _key: SampleKey) -> Vec<f64> {
        value.to_vec()
    }
}
