//! Moving the stored samples from one target to the next.
//!
//! A target change that keeps the sample space multiplies every weight by the
//! new batch's likelihood and then rescales the block so that its total weight
//! equals its effective sample size. Fresh unit-weight samples appended later
//! then combine with the old block in proportion to their effective sizes.
//! A change that opens a new state instead pushes every sample through the
//! model's transition and leaves the weights alone.

use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::rng::{keyed, StreamRng};
use crate::store::SampleDatabase;
use crate::target::{effective_sample_size, ModelPlugin, TargetStep};

/// Weights below this after normalization are treated as zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Reweighted,
    Transited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub kind: UpdateKind,
    pub ess_before: f64,
    pub ess_after: f64,
    /// Number of records the update touched.
    pub updated: usize,
}

/// Multiplies `weights` by `exp(log_v)` and rescales so that the result sums
/// to its own effective sample size.
///
/// `log_v` only matters up to an additive constant.
pub fn reweight_and_scale(weights: &[f64], log_v: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != log_v.len() {
        return Err(contract(format!(
            "{} weights for {} log increments",
            weights.len(),
            log_v.len()
        )));
    }
    let mut log_w = Vec::with_capacity(weights.len());
    for (&w, &lv) in weights.iter().zip(log_v) {
        if !(w.is_finite() && w >= 0.0) {
            return Err(contract(format!("invalid weight {w}")));
        }
        if lv.is_nan() || lv == f64::INFINITY {
            return Err(Error::Numerical(format!("log incremental weight {lv}")));
        }
        log_w.push(if w > 0.0 {
            w.ln() + lv
        } else {
            f64::NEG_INFINITY
        });
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights(
            "every sample is incompatible with the new batch",
        ));
    }
    let big_w: Vec<f64> = log_w
        .iter()
        .map(|&l| {
            let x = (l - max).exp();
            if x < WEIGHT_FLOOR {
                0.0
            } else {
                x
            }
        })
        .collect();
    let sum: f64 = big_w.iter().sum();
    let sum_sq: f64 = big_w.iter().map(|x| x * x).sum();
    let d = sum / sum_sq;
    Ok(big_w
        .into_iter()
        .map(|x| {
            let y = x * d;
            if y < WEIGHT_FLOOR {
                0.0
            } else {
                y
            }
        })
        .collect())
}

fn stale_records(db: &SampleDatabase, n: u64) -> Vec<usize> {
    db.records()
        .enumerate()
        .filter(|(_, r)| r.info_cutoff < n)
        .map(|(i, _)| i)
        .collect()
}

/// Replaces the value of every record produced before target `n` by
/// `f(value, U)`. Each record gets its own substream keyed by its
/// production sequence number, seeded from one draw of `rng`. Weights are
/// left unchanged; on any failure the store is untouched.
pub fn transit_all<R, F>(
    db: &mut SampleDatabase,
    n: u64,
    rng: &mut R,
    mut f: F,
) -> Result<UpdateOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &mut StreamRng) -> Result<Vec<f64>>,
{
    let ess_before = db.ess();
    let seed: u64 = rng.random();
    let stale = stale_records(db, n);
    let mut transformed = Vec::with_capacity(db.len());
    let mut updated = 0;
    let mut next_stale = stale.iter().peekable();
    for (i, r) in db.records().enumerate() {
        if next_stale.peek() == Some(&&i) {
            next_stale.next();
            let mut sub = keyed(seed, r.production_seq, n);
            transformed.push((r.production_seq, f(&r.value, &mut sub)?));
            updated += 1;
        } else {
            transformed.push((r.production_seq, r.value.clone()));
        }
    }
    db.replace_values(transformed)?;
    Ok(UpdateOutcome {
        kind: UpdateKind::Transited,
        ess_before,
        ess_after: db.ess(),
        updated,
    })
}

/// Reweights the records produced before target `n` by `exp(log_v)` and
/// rescales that block. Records produced at target `n` or later keep their
/// weights.
pub fn reweight_all<F>(db: &mut SampleDatabase, n: u64, mut log_v: F) -> Result<UpdateOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let ess_before = db.ess();
    let stale = stale_records(db, n);
    let records: Vec<_> = db.records().collect();
    let old_w: Vec<f64> = stale.iter().map(|&i| records[i].weight).collect();
    let mut lv = Vec::with_capacity(stale.len());
    for &i in &stale {
        // Zero-weight records cannot come back, so skip their likelihood.
        lv.push(if records[i].weight > 0.0 {
            log_v(&records[i].value)?
        } else {
            0.0
        });
    }
    let mut new_weights: Vec<(u64, f64)> = records
        .iter()
        .map(|r| (r.production_seq, r.weight))
        .collect();
    if !stale.is_empty() {
        let scaled = reweight_and_scale(&old_w, &lv)?;
        for (&i, w) in stale.iter().zip(scaled) {
            new_weights[i].1 = w;
        }
    }
    db.set_weights(&new_weights)?;
    Ok(UpdateOutcome {
        kind: UpdateKind::Reweighted,
        ess_before,
        ess_after: db.ess(),
        updated: stale.len(),
    })
}

/// Moves the store from its current target to `step`, which must be the
/// successor. The model must still be at the previous target.
pub fn apply_target_change<M, R>(
    db: &mut SampleDatabase,
    model: &M,
    step: &TargetStep,
    batch: &M::Batch,
    rng: &mut R,
) -> Result<UpdateOutcome>
where
    M: ModelPlugin,
    R: Rng + ?Sized,
{
    if step.n != db.target() + 1 {
        return Err(contract(format!(
            "store is at target {}, cannot move to {}",
            db.target(),
            step.n
        )));
    }
    let outcome = if step.requires_transition {
        transit_all(db, step.n, rng, |v, sub| model.transition(v, batch, sub))?
    } else {
        reweight_all(db, step.n, |v| model.log_incremental_weight(v, batch))?
    };
    db.set_target(step.n);
    Ok(outcome)
}

/// Marks every record produced before target `n` as worthless. Used when an
/// update finds all of them incompatible with the new data.
pub fn discard_stale(db: &mut SampleDatabase, n: u64) -> Result<()> {
    let new_weights: Vec<(u64, f64)> = db
        .records()
        .map(|r| {
            (
                r.production_seq,
                if r.info_cutoff < n { 0.0 } else { r.weight },
            )
        })
        .collect();
    db.set_weights(&new_weights)?;
    db.set_target(n);
    Ok(())
}

/// Sanity check used by tests and debug assertions: after a rescale the
/// weights sum to their effective sample size.
pub fn scaling_defect(weights: &[f64]) -> Result<f64> {
    let ess = effective_sample_size(weights)?;
    let sum: f64 = weights.iter().sum();
    Ok((sum - ess).abs() / ess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::store::SampleRecord;
    use crate::target::weighted_mean;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn reweight_examples() {
        assert_eq!(
            reweight_and_scale(&[1.0, 1.0], &[0.3, 0.3]).unwrap(),
            vec![1.0, 1.0]
        );
        let w = reweight_and_scale(&[1.0, 1.0], &[0.0, 3f64.ln()]).unwrap();
        assert!(close(w[0], 0.4, 1e-12) && close(w[1], 1.2, 1e-12), "{w:?}");
        assert!(close(w.iter().sum::<f64>(), 1.6, 1e-12));
        let shifted = reweight_and_scale(&[1.0, 1.0], &[-700.0, -700.0 + 3f64.ln()]).unwrap();
        assert!(close(shifted[0], 0.4, 1e-12) && close(shifted[1], 1.2, 1e-12));
    }

    #[test]
    fn reweight_degenerate_and_bad_input() {
        assert!(matches!(
            reweight_and_scale(&[1.0, 1.0], &[f64::NEG_INFINITY; 2]),
            Err(Error::DegenerateWeights(_))
        ));
        assert!(matches!(
            reweight_and_scale(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::DegenerateWeights(_))
        ));
        assert!(reweight_and_scale(&[1.0], &[f64::NAN]).is_err());
        assert!(reweight_and_scale(&[1.0], &[0.0, 0.0]).is_err());
        // Extreme spreads underflow to exact zeros rather than subnormals.
        let w = reweight_and_scale(&[1.0, 1.0], &[0.0, -800.0]).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    fn db_with(values: &[f64]) -> SampleDatabase {
        let mut db = SampleDatabase::new(1, 1000).unwrap();
        db.insert_batch(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| SampleRecord::fresh(vec![v], i as u64 + 1, 1))
                .collect(),
        )
        .unwrap();
        db.set_target(1);
        db
    }

    #[test]
    fn transit_examples() {
        let mut db = db_with(&[0.0, 2.0]);
        db.set_weights(&[(1, 0.5), (2, 1.5)]).unwrap();
        let mut rng = stream(1, 1);
        let out = transit_all(&mut db, 2, &mut rng, |v, _| Ok(vec![v[0] + 1.0])).unwrap();
        assert_eq!(out.kind, UpdateKind::Transited);
        assert_eq!(out.ess_before, out.ess_after);
        let vals: Vec<f64> = db.records().map(|r| r.value[0]).collect();
        assert_eq!(vals, vec![1.0, 3.0]);
        assert_eq!(db.weights(), vec![0.5, 1.5]);

        let before = db.snapshot().records;
        transit_all(&mut db, 3, &mut rng, |v, _| Ok(v.to_vec())).unwrap();
        assert_eq!(db.snapshot().records, before);

        let err = transit_all(&mut db, 4, &mut rng, |v, _| {
            if v[0] > 2.0 {
                Err(Error::Model("boom".into()))
            } else {
                Ok(vec![-1.0])
            }
        });
        assert!(err.is_err());
        assert_eq!(db.snapshot().records, before);
    }

    #[test]
    fn transit_randomness_is_per_record() {
        let mut a = db_with(&[0.0; 3]);
        let mut b = db_with(&[0.0; 3]);
        let f = |_: &[f64], r: &mut StreamRng| Ok(vec![rand::Rng::random::<f64>(r)]);
        transit_all(&mut a, 2, &mut stream(3, 2), f).unwrap();
        transit_all(&mut b, 2, &mut stream(3, 2), f).unwrap();
        let va: Vec<f64> = a.records().map(|r| r.value[0]).collect();
        assert_eq!(va, b.records().map(|r| r.value[0]).collect::<Vec<_>>());
        assert!(va[0] != va[1] && va[1] != va[2]);
    }

    #[test]
    fn fresh_records_are_left_alone() {
        let mut db = db_with(&[0.0, 1.0]);
        db.insert_batch(vec![SampleRecord::fresh(vec![5.0], 3, 2)])
            .unwrap();
        let out = reweight_all(&mut db, 2, |v| Ok(v[0] * 10.0)).unwrap();
        assert_eq!(out.updated, 2);
        let w = db.weights();
        assert_eq!(w[2], 1.0);
        assert!(w[0] < w[1]);
        let out = transit_all(&mut db, 2, &mut stream(0, 0), |_, _| Ok(vec![9.0])).unwrap();
        assert_eq!(out.updated, 2);
        assert_eq!(db.records().last().unwrap().value, vec![5.0]);
    }

    /// A two-point toy: every sample is state 0 or 1 and the batch has
    /// likelihood `lik[state]`. The updated weights must reproduce the
    /// brute-force posterior `prior[s] * lik[s] / Σ`.
    #[test]
    fn two_point_posterior_matches_enumeration() {
        let mut db = db_with(&[0.0, 1.0, 1.0, 0.0, 1.0]);
        let lik = [0.2f64, 0.7];
        reweight_all(&mut db, 2, |v| Ok(lik[v[0] as usize].ln())).unwrap();
        let w = db.weights();
        let vals: Vec<Vec<f64>> = db.records().map(|r| r.value.clone()).collect();
        let p1 = weighted_mean(&w, &vals).unwrap()[0];
        let (prior0, prior1) = (2.0 / 5.0, 3.0 / 5.0);
        let exact = prior1 * lik[1] / (prior0 * lik[0] + prior1 * lik[1]);
        assert!((p1 - exact).abs() < 1e-12, "{p1} vs {exact}");
    }

    #[test]
    fn flat_likelihood_leaves_weights() {
        let mut db = db_with(&[0.0, 1.0, 2.0]);
        reweight_all(&mut db, 2, |_| Ok(-3.5)).unwrap();
        assert_eq!(db.weights(), vec![1.0; 3]);
    }

    proptest! {
        #[test]
        fn scaling_identity(
            pairs in prop::collection::vec((0.0f64..10.0, -30.0f64..30.0), 1..200)
        ) {
            let (w, lv): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let out = reweight_and_scale(&w, &lv).unwrap();
            prop_assert!(scaling_defect(&out).unwrap() <= 1e-9);
            let shifted: Vec<f64> = lv.iter().map(|x| x + 17.0).collect();
            let again = reweight_and_scale(&w, &shifted).unwrap();
            for (a, b) in out.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
