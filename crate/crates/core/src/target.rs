//! Target sequences, weighted samples and the model plug-in contract.
//!
//! A run walks through a sequence of targets `π_1, π_2, …`. Target `n` sits
//! at coordinates `(k, t)`: `t` is the state index (a season for the football
//! model, a time step for the linear Gaussian model) and `k` is the number of
//! observation batches of state `t` absorbed so far. Moving to `k = 0` grows
//! the sample space, so stored samples must be mapped forward by a transition
//! function; every other move keeps the space and only changes the weights.

use rand::Rng;

use crate::error::{contract, Error, Result};

/// One target of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TargetStep {
    /// Global target index, starting at 1.
    pub n: u64,
    /// Observation batch index within the state; 0 means no data yet.
    pub k: u64,
    /// State index, starting at 1.
    pub t: u64,
    /// Whether reaching this target requires a transition (`k == 0`).
    pub requires_transition: bool,
}

impl TargetStep {
    /// The first target: the prior of state 1.
    pub fn first() -> Self {
        Self::new(1, 0, 1)
    }

    pub fn new(n: u64, k: u64, t: u64) -> Self {
        Self {
            n,
            k,
            t,
            requires_transition: k == 0,
        }
    }

    /// The target reached by revealing the next observation batch of the
    /// current state.
    pub fn next_batch(&self) -> Self {
        Self::new(self.n + 1, self.k + 1, self.t)
    }

    /// The target reached by opening the next state.
    pub fn next_state(&self) -> Self {
        Self::new(self.n + 1, 0, self.t + 1)
    }

    /// True when `other` is the immediate successor of `self`.
    pub fn is_successor(&self, other: &TargetStep) -> bool {
        other.n == self.n + 1
            && ((other.t == self.t && other.k == self.k + 1)
                || (other.t == self.t + 1 && other.k == 0))
    }
}

/// Maps a global target index to its `(k, t)` coordinates given the number of
/// observation batches `c_t` of every state.
///
/// State `t` owns `c_t + 1` consecutive targets (`k = 0..=c_t`).
pub fn target_indices(n: u64, batch_counts: &[u64]) -> Result<(u64, u64)> {
    let last: u64 = batch_counts.iter().map(|c| c + 1).sum();
    if n == 0 || n > last {
        return Err(Error::TargetOutOfRange { n, last });
    }
    // t = max{ j : n - 1 >= sum_{i < j} (c_i + 1) }, k = n - 1 - that sum.
    let mut preceding = 0u64;
    let mut t = 1u64;
    for c in batch_counts {
        let next = preceding + c + 1;
        if n - 1 < next {
            break;
        }
        preceding = next;
        t += 1;
    }
    Ok((n - 1 - preceding, t))
}

/// Builds the full [`TargetStep`] for index `n`.
pub fn target_step(n: u64, batch_counts: &[u64]) -> Result<TargetStep> {
    let (k, t) = target_indices(n, batch_counts)?;
    Ok(TargetStep::new(n, k, t))
}

/// A sample value together with its non-negative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    value: Vec<f64>,
    weight: f64,
}

impl WeightedSample {
    pub fn new(value: Vec<f64>, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        Ok(Self { value, weight })
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

pub(crate) fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(contract(format!(
            "weight must be finite and non-negative, got {w}"
        )))
    }
}

/// Effective sample size `(Σw)² / Σw²`.
///
/// Weights are rescaled by their maximum before squaring so that very small or
/// very large weights neither underflow nor overflow.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let mut max = 0.0f64;
    for &w in weights {
        check_weight(w)?;
        max = max.max(w);
    }
    if max == 0.0 {
        return Err(Error::DegenerateWeights(
            "effective sample size of zero weights",
        ));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &w in weights {
        let s = w / max;
        sum += s;
        sum_sq += s * s;
    }
    Ok(sum * sum / sum_sq)
}

/// Self-normalized weighted mean of vector-valued `g` evaluations.
pub fn weighted_mean(weights: &[f64], values: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != values.len() {
        return Err(contract(format!(
            "{} weights for {} values",
            weights.len(),
            values.len()
        )));
    }
    let mut total = 0.0;
    let mut acc: Vec<f64> = Vec::new();
    for (&w, v) in weights.iter().zip(values) {
        check_weight(w)?;
        if w == 0.0 {
            continue;
        }
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        } else if acc.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: acc.len(),
                got: v.len(),
            });
        }
        total += w;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    if total == 0.0 {
        return Err(Error::DegenerateWeights(
            "weighted estimate with zero total weight",
        ));
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// The estimator `T = Σ w g(ξ) / Σ w`, componentwise.
pub fn weighted_estimate<G>(samples: &[WeightedSample], mut g: G) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let values: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            if s.weight > 0.0 {
                g(&s.value)
            } else {
                Vec::new()
            }
        })
        .collect();
    weighted_mean(&weights, &values)
}

/// Identifies a stored sample when a model needs per-sample randomness, e.g.
/// the football model simulating the rest of a season once per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleKey {
    pub production_seq: u64,
    pub target: u64,
}

/// The capabilities a model must supply to be driven by the system.
///
/// The model owns the data revealed so far and therefore knows its current
/// target. Weighting and transition calls look one step ahead: they receive
/// the batch that is about to be revealed and are evaluated before
/// [`ModelPlugin::advance`] absorbs it.
pub trait ModelPlugin {
    /// Payload revealed on a target change. For a transition step it carries
    /// whatever describes the new state (e.g. a season's team list).
    type Batch: Clone;

    /// Dimension of a sample for the current target.
    fn dimension(&self) -> usize;

    /// Starting point of the chain at the current target.
    fn initial_state(&self) -> Vec<f64>;

    /// One MCMC step leaving the current target invariant.
    fn mcmc_step<R: Rng + ?Sized>(&self, state: &mut Vec<f64>, rng: &mut R) -> Result<()>;

    /// Unnormalized `log dπ_j/dπ_{j-1}` at `value` for a batch that does not
    /// change the sample space.
    fn log_incremental_weight(&self, value: &[f64], batch: &Self::Batch) -> Result<f64>;

    /// Maps a sample of the current target onto the space opened by `batch`.
    fn transition<R: Rng + ?Sized>(
        &self,
        value: &[f64],
        batch: &Self::Batch,
        rng: &mut R,
    ) -> Result<Vec<f64>>;

    /// Absorbs the batch; the model now targets `step`.
    fn advance(&mut self, step: &TargetStep, batch: Self::Batch) -> Result<()>;

    /// The estimand `g_n` at the current target.
    fn estimand(&self, value: &[f64], key: SampleKey) -> Vec<f64>;

    /// Statistics used to tune the subsampling interval. Defaults to the
    /// estimand.
    fn tuning_statistics(&self, value: &[f64], key: SampleKey) -> Vec<f64> {
        self.estimand(value, key)
    }

    /// Whether the estimand of a sample is a deterministic function of the
    /// sample and the target, so it may be cached per target.
    fn estimand_is_cacheable(&self) -> bool {
        true
    }

    /// Extra per-sample quantities reported alongside the estimate but not
    /// used for control. Empty by default.
    fn auxiliary(&self, _value: &[f64]) -> Vec<f64> {
        Vec::new()
    }
}
