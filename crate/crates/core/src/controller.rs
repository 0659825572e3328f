//! Hysteresis control of the sampler and of the database size.
//!
//! The controller keeps the accuracy `A` of the reported estimate inside
//! `[β₁, β₂]` by pausing and resuming the sampler, and keeps the quality
//! `Q = ESS / N_MAX` inside `[γ₁, γ₂]` by resizing `N_MAX`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_min: usize,
    pub resize_fraction: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            beta1: 0.01,
            beta2: 0.0125,
            gamma1: 0.1,
            gamma2: 0.75,
            n_min: 1000,
            resize_fraction: 0.1,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.beta1
            && self.beta1 < self.beta2
            && self.beta2.is_finite()
            && 0.0 < self.gamma1
            && self.gamma1 < self.gamma2
            && self.gamma2 <= 1.0
            && self.n_min >= 1
            && 0.0 < self.resize_fraction
            && self.resize_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid control thresholds: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlState {
    pub rmcmc_on: bool,
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlAction {
    Pause,
    Resume,
    Shrink {
        from: usize,
        to: usize,
    },
    Grow {
        from: usize,
        to: usize,
    },
    /// Too few batches to trust the accuracy: drop to `N_MIN` and resample.
    Replenish {
        from: usize,
        to: usize,
    },
}

/// `Q = ESS / N_MAX`.
pub fn quality(ess: f64, n_max: usize) -> f64 {
    ess / n_max as f64
}

// Guards against 0.9 * 1000 landing on 899.999….
const ROUNDING_GUARD: f64 = 1e-9;

pub fn shrunk(n_max: usize, config: &ControlConfig) -> usize {
    let x = n_max as f64 * (1.0 - config.resize_fraction);
    ((x + ROUNDING_GUARD).floor() as usize).max(config.n_min)
}

pub fn grown(n_max: usize, config: &ControlConfig) -> usize {
    let x = n_max as f64 * (1.0 + config.resize_fraction);
    (x - ROUNDING_GUARD).ceil() as usize
}

/// One pass of the control rules, applied in order:
///
/// 1. `A < β₁` and `N ≥ N_MIN`: pause.
/// 2. `A > β₂`, or paused with `Q < γ₁` and `N = N_MIN`: resume.
/// 3. paused, `Q < γ₁` and `N > N_MIN`: shrink `N_MAX`.
/// 4. running and `Q > γ₂`: grow `N_MAX`.
///
/// A negative `A` is the too-few-batches sentinel: `N_MAX` drops to `N_MIN`
/// and the sampler runs.
pub fn control_step(
    a: f64,
    q: f64,
    n: usize,
    state: ControlState,
    config: &ControlConfig,
) -> (ControlState, Vec<ControlAction>) {
    let mut actions = Vec::new();
    if a < 0.0 {
        let to = config.n_min;
        actions.push(ControlAction::Replenish {
            from: state.n_max,
            to,
        });
        return (
            ControlState {
                rmcmc_on: true,
                n_max: to,
            },
            actions,
        );
    }

    let mut next = state;
    if a < config.beta1 && n >= config.n_min {
        next.rmcmc_on = false;
    }
    if a > config.beta2 || (!next.rmcmc_on && q < config.gamma1 && n == config.n_min) {
        next.rmcmc_on = true;
    }
    match (state.rmcmc_on, next.rmcmc_on) {
        (true, false) => actions.push(ControlAction::Pause),
        (false, true) => actions.push(ControlAction::Resume),
        _ => {}
    }
    if !next.rmcmc_on && q < config.gamma1 && n > config.n_min {
        let to = shrunk(next.n_max, config);
        if to != next.n_max {
            actions.push(ControlAction::Shrink {
                from: next.n_max,
                to,
            });
            next.n_max = to;
        }
    }
    if next.rmcmc_on && q > config.gamma2 {
        let to = grown(next.n_max, config);
        actions.push(ControlAction::Grow {
            from: next.n_max,
            to,
        });
        next.n_max = to;
    }
    (next, actions)
}
