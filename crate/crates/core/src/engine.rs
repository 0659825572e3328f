//! The rolling MCMC process.
//!
//! One chain runs for the whole life of the system. When the target changes
//! the chain is not restarted: its current point is carried over (through the
//! transition when the sample space grows), a fresh burn-in is counted down,
//! and sampling resumes against the new target.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::store::SampleRecord;
use crate::target::{ModelPlugin, TargetStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Raw MCMC steps discarded after every target change.
    pub burn_in: u64,
    /// Keep every `subsample`-th draw.
    pub subsample: u64,
    pub write_batch_size: usize,
    /// Burn-in used after transition steps instead of `burn_in`, if set.
    pub transition_burn_in: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            subsample: 1,
            write_batch_size: 500,
            transition_burn_in: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subsample == 0 || self.write_batch_size == 0 {
            return Err(Error::Config(
                "subsample and write_batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub current_sample: Vec<f64>,
    pub remaining_burn_in: u64,
    /// Raw steps since the last retained draw.
    pub thin_counter: u64,
    pub current_target: TargetStep,
    pub pending_writes: Vec<SampleRecord>,
    pub next_seq: u64,
    /// Raw MCMC steps performed so far, burn-in included.
    pub total_steps: u64,
}

impl EngineState {
    /// Starts the chain at the model's initializer for its current target.
    pub fn new<M: ModelPlugin>(model: &M, target: TargetStep, config: &EngineConfig) -> Self {
        Self {
            current_sample: model.initial_state(),
            remaining_burn_in: config.burn_in,
            thin_counter: 0,
            current_target: target,
            pending_writes: Vec::new(),
            next_seq: 1,
            total_steps: 0,
        }
    }

    /// Takes the pending records, leaving the buffer empty.
    pub fn flush(&mut self) -> Vec<SampleRecord> {
        std::mem::take(&mut self.pending_writes)
    }

    /// Drops pending records, e.g. ones produced against a superseded
    /// target.
    pub fn discard_pending(&mut self) -> usize {
        let n = self.pending_writes.len();
        self.pending_writes.clear();
        n
    }
}

/// Retargets the chain. Pending writes must have been flushed already.
pub fn on_target_change<M, R>(
    state: &mut EngineState,
    model: &M,
    step: &TargetStep,
    batch: &M::Batch,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<()>
where
    M: ModelPlugin,
    R: Rng + ?Sized,
{
    if !state.current_target.is_successor(step) {
        return Err(contract(format!(
            "engine at target {} cannot move to {}",
            state.current_target.n, step.n
        )));
    }
    if !state.pending_writes.is_empty() {
        return Err(contract(
            "pending writes must be flushed before a target change",
        ));
    }
    if step.requires_transition {
        state.current_sample = model.transition(&state.current_sample, batch, rng)?;
        state.remaining_burn_in = config.transition_burn_in.unwrap_or(config.burn_in);
    } else {
        state.remaining_burn_in = config.burn_in;
    }
    state.thin_counter = 0;
    state.current_target = *step;
    Ok(())
}

/// One scheduler tick. When running, performs `subsample` raw steps; a raw
/// step made while burn-in remains only counts it down, every other raw step
/// advances the thinning counter and the `subsample`-th one is retained.
///
/// Returns a full write batch once `write_batch_size` records are pending.
pub fn engine_tick<M, R>(
    state: &mut EngineState,
    model: &M,
    rmcmc_on: bool,
    config: &EngineConfig,
    rng: &mut R,
) -> Result<Option<Vec<SampleRecord>>>
where
    M: ModelPlugin,
    R: Rng + ?Sized,
{
    if !rmcmc_on {
        return Ok(None);
    }
    for _ in 0..config.subsample {
        model.mcmc_step(&mut state.current_sample, rng)?;
        state.total_steps += 1;
        if state.remaining_burn_in > 0 {
            state.remaining_burn_in -= 1;
            continue;
        }
        state.thin_counter += 1;
        if state.thin_counter == config.subsample {
            state.thin_counter = 0;
            state.pending_writes.push(SampleRecord::fresh(
                state.current_sample.clone(),
                state.next_seq,
                state.current_target.n,
            ));
            state.next_seq += 1;
        }
    }
    if state.pending_writes.len() >= config.write_batch_size {
        Ok(Some(state.flush()))
    } else {
        Ok(None)
    }
}

/// Classical batch-means estimate of the asymptotic variance: `b` times the
/// sample variance of the non-overlapping length-`b` batch means. A trailing
/// partial batch is dropped.
pub fn estimate_asymptotic_variance(chain: &[f64], b: usize) -> Result<f64> {
    if b == 0 || chain.len() < 2 * b {
        return Err(contract(format!(
            "need at least two batches of {b}, chain has {} values",
            chain.len()
        )));
    }
    let means: Vec<f64> = chain
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let l = means.len() as f64;
    let mu = means.iter().sum::<f64>() / l;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (l - 1.0);
    Ok(b as f64 * var)
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0)
}

/// Minimum pilot length accepted by [`tune_subsample`], and the shortest
/// thinned chain it will still evaluate.
pub const MIN_PILOT: usize = 1000;

/// Inflation `ρ̂ = ς̂² / var` of the chain thinned to every `k`-th value, with
/// batch length `⌊len^{1/3}⌋`.
pub fn thinned_rho(pilot: &[f64], k: usize) -> Option<f64> {
    let thinned: Vec<f64> = pilot.iter().step_by(k).copied().collect();
    if thinned.len() < MIN_PILOT / 10 {
        return None;
    }
    let var = sample_variance(&thinned);
    if var == 0.0 {
        return Some(1.0);
    }
    let b = ((thinned.len() as f64).cbrt().floor() as usize).max(1);
    estimate_asymptotic_variance(&thinned, b)
        .ok()
        .map(|s| s / var)
}

/// Smallest thinning interval whose estimated inflation is at most
/// `target_rho`.
pub fn tune_subsample(pilot: &[f64], target_rho: f64) -> Result<u64> {
    if pilot.len() < MIN_PILOT {
        return Err(contract(format!(
            "pilot chain has {} values, need at least {MIN_PILOT}",
            pilot.len()
        )));
    }
    let mut k = 1;
    while let Some(rho) = thinned_rho(pilot, k) {
        if rho <= target_rho {
            return Ok(k as u64);
        }
        k += 1;
    }
    Err(contract(format!(
        "pilot too short: no thinning up to {} reaches rho <= {target_rho}",
        k - 1
    )))
}

/// Tunes every statistic separately and keeps the largest interval.
pub fn tune_subsample_multi(pilot: &[Vec<f64>], target_rho: f64) -> Result<u64> {
    let dim = pilot.first().map_or(0, Vec::len);
    let mut k = 1;
    for j in 0..dim {
        let series: Vec<f64> = pilot.iter().map(|v| v[j]).collect();
        k = k.max(tune_subsample(&series, target_rho)?);
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::target::SampleKey;
    use rand_distr::{Distribution, StandardNormal};

    /// Random walk on the integers; a transition appends a zero.
    struct Walk;

    impl ModelPlugin for Walk {
        type Batch = ();
        fn dimension(&self) -> usize {
            1
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn mcmc_step<R: Rng + ?Sized>(&self, s: &mut Vec<f64>, _: &mut R) -> Result<()> {
            s[0] += 1.0;
            Ok(())
        }
        fn log_incremental_weight(&self, _: &[f64], _: &()) -> Result<f64> {
            Ok(0.0)
        }
        fn transition<R: Rng + ?Sized>(&self, v: &[f64], _: &(), _: &mut R) -> Result<Vec<f64>> {
            Ok(v.to_vec())
        }
        fn advance(&mut self, _: &TargetStep, _: ()) -> Result<()> {
            Ok(())
        }
        fn estimand(&self, v: &[f64], _: SampleKey) -> Vec<f64> {
            v.to_vec()
        }
    }

    fn cfg(burn_in: u64, subsample: u64, batch: usize) -> EngineConfig {
        EngineConfig {
            burn_in,
            subsample,
            write_batch_size: batch,
            transition_burn_in: None,
        }
    }

    #[test]
    fn burn_in_countdown() {
        let c = cfg(3, 1, 1);
        let mut s = EngineState::new(&Walk, TargetStep::first(), &c);
        let mut rng = stream(0, 0);
        for _ in 0..3 {
            assert!(engine_tick(&mut s, &Walk, true, &c, &mut rng)
                .unwrap()
                .is_none());
        }
        assert_eq!(s.remaining_burn_in, 0);
        let out = engine_tick(&mut s, &Walk, true, &c, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value, vec![4.0]);
        assert_eq!(
            (out[0].weight, out[0].production_seq, out[0].info_cutoff),
            (1.0, 1, 1)
        );
    }

    #[test]
    fn paused_tick_does_nothing() {
        let c = cfg(0, 1, 1);
        let mut s = EngineState::new(&Walk, TargetStep::first(), &c);
        let before = s.clone();
        assert!(engine_tick(&mut s, &Walk, false, &c, &mut stream(0, 0))
            .unwrap()
            .is_none());
        assert_eq!(s, before);
    }

    #[test]
    fn subsampling_keeps_every_kth() {
        let c = cfg(2, 3, 4);
        let mut s = EngineState::new(&Walk, TargetStep::first(), &c);
        let mut rng = stream(0, 0);
        let mut written = Vec::new();
        for _ in 0..20 {
            if let Some(b) = engine_tick(&mut s, &Walk, true, &c, &mut rng).unwrap() {
                written.extend(b);
            }
        }
        let vals: Vec<f64> = written.iter().map(|r| r.value[0]).collect();
        let expect: Vec<f64> = (0..16).map(|i| 5.0 + 3.0 * i as f64).collect();
        assert_eq!(vals, expect);
        assert_eq!(s.pending_writes.len(), 3);
        assert_eq!(s.total_steps, 60);
        let seqs: Vec<u64> = written.iter().map(|r| r.production_seq).collect();
        assert_eq!(seqs, (1..=16).collect::<Vec<_>>());
    }

    #[test]
    fn target_change_resets_burn_in() {
        let c = cfg(2, 1, 1);
        let mut s = EngineState::new(&Walk, TargetStep::first(), &c);
        let mut rng = stream(0, 0);
        for _ in 0..3 {
            engine_tick(&mut s, &Walk, true, &c, &mut rng).unwrap();
        }
        let next = TargetStep::first().next_batch();
        on_target_change(&mut s, &Walk, &next, &(), &c, &mut rng).unwrap();
        assert_eq!(
            (s.remaining_burn_in, s.current_sample.clone()),
            (2, vec![3.0])
        );
        let far = TargetStep::new(9, 1, 1);
        assert!(on_target_change(&mut s, &Walk, &far, &(), &c, &mut rng).is_err());

        let c0 = cfg(0, 1, 1);
        on_target_change(&mut s, &Walk, &next.next_state(), &(), &c0, &mut rng).unwrap();
        let out = engine_tick(&mut s, &Walk, true, &c0, &mut rng)
            .unwrap()
            .unwrap();
        assert_eq!(out[0].info_cutoff, 3);
        assert_eq!(out[0].value, vec![4.0]);
    }

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        let sd = (1.0 - phi * phi).sqrt();
        let mut x: f64 = StandardNormal.sample(&mut rng);
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + sd * e;
                x
            })
            .collect()
    }

    #[test]
    fn asymptotic_variance_examples() {
        assert_eq!(estimate_asymptotic_variance(&[2.0; 400], 20).unwrap(), 0.0);
        let s = estimate_asymptotic_variance(&ar1(0.0, 10_000, 1), 100).unwrap();
        assert!((s - 1.0).abs() < 0.25, "{s}");
        let s = estimate_asymptotic_variance(&ar1(0.5, 100_000, 2), 100).unwrap();
        assert!((s - 3.0).abs() < 0.75, "{s}");
        assert!(estimate_asymptotic_variance(&[1.0; 10], 6).is_err());
    }

    #[test]
    fn tune_examples() {
        assert!(tune_subsample(&[0.0; 999], 2.0).is_err());
        assert_eq!(tune_subsample(&ar1(0.0, 100_000, 3), 2.0).unwrap(), 1);
        let k = tune_subsample(&ar1(0.9, 200_000, 4), 2.0).unwrap();
        assert!((9..=13).contains(&k), "{k}");
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        assert!(cfg(0, 0, 1).validate().is_err());
        assert!(cfg(0, 1, 0).validate().is_err());
    }
}
