//! Weighted batch means.
//!
//! Samples are laid out in production order on the line `[0, Σw)`, each
//! occupying an interval as long as its weight. The line is cut into batches
//! of length `b`; a sample straddling a cut contributes to both sides in
//! proportion to its overlap `κ_i(u)`. The spread of the batch means then
//! measures how much the estimate moves with the chain's dependence taken into
//! account.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// What the controller compares against its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyScale {
    /// `Â`, the standard deviation of one batch mean.
    BatchMeanSd,
    /// `Â / √L`, the standard error of the overall estimate.
    #[default]
    StandardError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyConfig {
    pub batch_lengths: Vec<f64>,
    pub min_batches: usize,
    pub scale: AccuracyScale,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self {
            batch_lengths: vec![10.0, 50.0],
            min_batches: 20,
            scale: AccuracyScale::default(),
        }
    }
}

impl AccuracyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_lengths.is_empty()
            || self
                .batch_lengths
                .iter()
                .any(|b| !(b.is_finite() && *b > 0.0))
        {
            return Err(Error::Config(format!(
                "batch lengths must be positive, got {:?}",
                self.batch_lengths
            )));
        }
        if self.min_batches == 0 {
            return Err(Error::Config("min_batches must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn largest_b(&self) -> f64 {
        self.batch_lengths.iter().copied().fold(0.0, f64::max)
    }
}

/// Reported when there are too few batches to trust the estimate.
pub const ACCURACY_SENTINEL: f64 = -1.0;

/// Cumulative weights `D_0 = 0, D_u = w_1 + … + w_u`.
pub fn cumulative_weights(weights: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(weights.len() + 1);
    d.push(0.0);
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        d.push(acc);
    }
    d
}

/// `κ_i(u) = [min(D_u, i·b) − max(D_{u−1}, (i−1)·b)]⁺`, with 1-based `i` and
/// `u`.
pub fn batch_weight(i: usize, u: usize, b: f64, cum: &[f64]) -> f64 {
    piece(i - 1, b, cum[u - 1], cum[u] - cum[u - 1], false)
}

/// Overlap of the sample occupying `[start, start + w)` with 0-based batch
/// `i`. Measured from `start`, so the pieces of one sample add up to `w`
/// without cancellation against the cumulative mass. `open_end` extends the
/// batch to infinity.
pub fn piece(i: usize, b: f64, start: f64, w: f64, open_end: bool) -> f64 {
    let lo = (i as f64 * b - start).max(0.0);
    let hi = if open_end {
        w
    } else {
        ((i + 1) as f64 * b - start).min(w)
    };
    (hi - lo).max(0.0)
}

/// Number of batches before merging a light final batch.
pub fn raw_batch_count(total: f64, b: f64) -> usize {
    (total / b).ceil().max(1.0) as usize
}

/// Per-component `Â` for batch length `b`, and the number of batches used.
///
/// A final batch holding less than `b/2` of mass is merged into its
/// predecessor.
pub fn batch_means_accuracy(
    weights: &[f64],
    values: &[Vec<f64>],
    b: f64,
) -> Result<(Vec<f64>, usize)> {
    if weights.len() != values.len() {
        return Err(contract(format!(
            "{} weights for {} values",
            weights.len(),
            values.len()
        )));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(contract(format!("batch length {b}")));
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateWeights(
            "batch means with zero total weight",
        ));
    }
    let dim = weights
        .iter()
        .zip(values)
        .find(|(w, _)| **w > 0.0)
        .map(|(_, v)| v.len())
        .unwrap_or(0);
    let raw = raw_batch_count(total, b);
    let last_mass = total - (raw - 1) as f64 * b;
    let l = if raw > 1 && last_mass < b / 2.0 {
        raw - 1
    } else {
        raw
    };

    let mut mass = vec![0.0; l];
    let mut sums = vec![vec![0.0; dim]; l];
    let mut start = 0.0;
    for (&w, v) in weights.iter().zip(values) {
        if w <= 0.0 {
            continue;
        }
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        let end = start + w;
        let first = ((start / b).floor() as usize).min(l - 1);
        let mut i = first;
        loop {
            // Batch i (0-based) covers [i·b, (i+1)·b), the last one open-ended.
            let k = piece(i, b, start, w, i + 1 == l);
            if k > 0.0 {
                mass[i] += k;
                for (s, x) in sums[i].iter_mut().zip(v) {
                    *s += k * x;
                }
            }
            if i + 1 == l || end <= (i + 1) as f64 * b {
                break;
            }
            i += 1;
        }
        start = end;
    }

    let total_mass: f64 = mass.iter().sum();
    let overall: Vec<f64> = (0..dim)
        .map(|j| sums.iter().map(|s| s[j]).sum::<f64>() / total_mass)
        .collect();
    let mut a2 = vec![0.0; dim];
    for (m, s) in mass.iter().zip(&sums) {
        if *m <= 0.0 {
            continue;
        }
        for j in 0..dim {
            let d = s[j] / m - overall[j];
            a2[j] += d * d;
        }
    }
    Ok((a2.into_iter().map(|x| (x / l as f64).sqrt()).collect(), l))
}

/// Per-component accuracy, maximized over the configured batch lengths, or
/// `None` when the largest batch length leaves fewer than `min_batches`
/// batches (or no weight at all).
pub fn accuracy_components(
    weights: &[f64],
    values: &[Vec<f64>],
    config: &AccuracyConfig,
) -> Option<Vec<f64>> {
    let largest = config.largest_b();
    let mut out: Option<Vec<f64>> = None;
    for &b in &config.batch_lengths {
        let (a, l) = batch_means_accuracy(weights, values, b).ok()?;
        if b == largest && l < config.min_batches {
            return None;
        }
        let scaled: Vec<f64> = match config.scale {
            AccuracyScale::BatchMeanSd => a,
            AccuracyScale::StandardError => a.iter().map(|x| x / (l as f64).sqrt()).collect(),
        };
        out = Some(match out {
            None => scaled,
            Some(prev) => prev.iter().zip(&scaled).map(|(p, s)| p.max(*s)).collect(),
        });
    }
    out
}

/// The controlled accuracy `A`: the largest per-component accuracy over all
/// batch lengths, or [`ACCURACY_SENTINEL`] when there are too few batches.
pub fn conservative_accuracy(weights: &[f64], values: &[Vec<f64>], config: &AccuracyConfig) -> f64 {
    match accuracy_components(weights, values, config) {
        Some(a) => a.into_iter().fold(0.0, f64::max),
        None => ACCURACY_SENTINEL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn col(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn kappa_examples() {
        let cum = cumulative_weights(&[1.0; 4]);
        for i in 1..=4 {
            for u in 1..=4 {
                assert_eq!(
                    batch_weight(i, u, 1.0, &cum),
                    if i == u { 1.0 } else { 0.0 }
                );
            }
        }
        let cum = cumulative_weights(&[1.5, 1.5]);
        assert_eq!(batch_weight(1, 1, 1.0, &cum), 1.0);
        assert_eq!(batch_weight(2, 1, 1.0, &cum), 0.5);
        assert_eq!(batch_weight(2, 2, 1.0, &cum), 0.5);
        assert_eq!(batch_weight(3, 2, 1.0, &cum), 1.0);
        assert_eq!(batch_weight(1, 2, 1.0, &cum), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        let (a, l) = batch_means_accuracy(&[1.0; 30], &col(&[4.0; 30]), 3.0).unwrap();
        assert_eq!((a, l), (vec![0.0], 10));

        let g = [1.0, 5.0, 2.0, 8.0];
        let (a, _) = batch_means_accuracy(&[1.0; 4], &col(&g), 1.0).unwrap();
        let mean = 4.0;
        let pop_var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((a[0] * a[0] - pop_var).abs() < 1e-12);

        assert!(matches!(
            batch_means_accuracy(&[0.0, 0.0], &col(&[1.0, 2.0]), 1.0),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn light_final_batch_is_merged() {
        // 10.3 units of mass at b = 1 gives 11 raw batches; the last holds 0.3.
        let mut w = vec![1.0; 10];
        w.push(0.3);
        let (_, l) = batch_means_accuracy(&w, &col(&[0.0; 11]), 1.0).unwrap();
        assert_eq!(l, 10);
        w[10] = 0.6;
        let (_, l) = batch_means_accuracy(&w, &col(&[0.0; 11]), 1.0).unwrap();
        assert_eq!(l, 11);
    }

    #[test]
    fn conservative_examples() {
        let cfg = AccuracyConfig {
            batch_lengths: vec![50.0],
            min_batches: 20,
            scale: AccuracyScale::BatchMeanSd,
        };
        assert_eq!(
            conservative_accuracy(&[1.0; 50], &col(&[1.0; 50]), &cfg),
            -1.0
        );
        assert_eq!(
            conservative_accuracy(&[0.0; 50], &col(&[1.0; 50]), &cfg),
            -1.0
        );

        // Component 2 is twice component 1, so its Â is twice as large.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let vals: Vec<Vec<f64>> = xs.iter().map(|&x| vec![0.01 * x, 0.02 * x]).collect();
        let cfg1 = AccuracyConfig {
            batch_lengths: vec![10.0],
            ..cfg.clone()
        };
        let (a, _) = batch_means_accuracy(&[1.0; 2000], &vals, 10.0).unwrap();
        assert_eq!(conservative_accuracy(&[1.0; 2000], &vals, &cfg1), a[1]);

        let cfg2 = AccuracyConfig {
            batch_lengths: vec![10.0, 50.0],
            ..cfg
        };
        let (a10, _) = batch_means_accuracy(&[1.0; 2000], &vals, 10.0).unwrap();
        let (a50, _) = batch_means_accuracy(&[1.0; 2000], &vals, 50.0).unwrap();
        assert_eq!(
            conservative_accuracy(&[1.0; 2000], &vals, &cfg2),
            a10[1].max(a50[1])
        );

        let se = AccuracyConfig {
            batch_lengths: vec![10.0],
            min_batches: 20,
            scale: AccuracyScale::StandardError,
        };
        let got = conservative_accuracy(&[1.0; 2000], &vals, &se);
        assert!((got - a10[1] / 200f64.sqrt()).abs() < 1e-15);
    }

    /// Independent classical batch means: unit weights, `b` divides `N`.
    fn classical(g: &[f64], b: usize) -> f64 {
        let means: Vec<f64> = g
            .chunks(b)
            .map(|c| c.iter().sum::<f64>() / b as f64)
            .collect();
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64
    }

    #[test]
    fn matches_classical_batch_means() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let g: Vec<f64> = (0..600).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in [1usize, 5, 20, 60] {
            let (a, l) = batch_means_accuracy(&vec![1.0; 600], &col(&g), b as f64).unwrap();
            assert_eq!(l, 600 / b);
            assert!((a[0] * a[0] - classical(&g, b)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn kappa_partitions_each_weight(
            w in prop::collection::vec(0.0f64..5.0, 1..60),
            b in 0.05f64..7.0,
        ) {
            let cum = cumulative_weights(&w);
            let l = raw_batch_count(cum[w.len()], b);
            let mut total = 0.0;
            for (u, &wu) in w.iter().enumerate() {
                let s: f64 = (1..=l).map(|i| batch_weight(i, u + 1, b, &cum)).sum();
                prop_assert!((s - wu).abs() <= 1e-12 * wu.max(1.0) * (l as f64).max(1.0));
                total += s;
            }
            prop_assert!((total - cum[w.len()]).abs() <= 1e-9 * cum[w.len()].max(1.0));
        }

        #[test]
        fn zero_weight_tail_is_ignored(
            w in prop::collection::vec(0.1f64..3.0, 5..60),
            extra in 1usize..10,
            b in 0.5f64..4.0,
        ) {
            let g: Vec<f64> = w.iter().enumerate().map(|(i, x)| (i as f64).sin() * x).collect();
            let base = batch_means_accuracy(&w, &col(&g), b).unwrap();
            let mut w2 = w.clone();
            let mut g2 = g.clone();
            w2.extend(std::iter::repeat_n(0.0, extra));
            g2.extend(std::iter::repeat_n(123.0, extra));
            let more = batch_means_accuracy(&w2, &col(&g2), b).unwrap();
            prop_assert_eq!(base.1, more.1);
            prop_assert!((base.0[0] - more.0[0]).abs() < 1e-12);
        }
    }
}
