//! Post-run evaluation: survival of stored samples and rank intervals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// How many data batches a sample outlived before deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLifetime {
    pub batches_survived: u64,
    /// Still stored when the run ended; the lifetime is a lower bound.
    pub censored: bool,
}

/// One step of the product-limit curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub u: u64,
    /// `S(u)`, the estimate just after `u`.
    pub s: f64,
    pub at_risk: usize,
    pub events: usize,
}

/// Kaplan-Meier estimate with one point per distinct observed time.
/// A sample censored at `u` is still at risk for deaths at `u`.
pub fn kaplan_meier(lifetimes: &[SampleLifetime]) -> Vec<SurvivalPoint> {
    let mut times: Vec<u64> = lifetimes.iter().map(|l| l.batches_survived).collect();
    times.sort_unstable();
    times.dedup();
    let mut s = 1.0;
    let mut out = Vec::with_capacity(times.len());
    for u in times {
        let at_risk = lifetimes.iter().filter(|l| l.batches_survived >= u).count();
        let events = lifetimes
            .iter()
            .filter(|l| l.batches_survived == u && !l.censored)
            .count();
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
        }
        out.push(SurvivalPoint {
            u,
            s,
            at_risk,
            events,
        });
    }
    out
}

/// Evaluates the right-continuous step function at `u`.
pub fn survival_at(curve: &[SurvivalPoint], u: u64) -> f64 {
    curve
        .iter()
        .take_while(|p| p.u <= u)
        .last()
        .map_or(1.0, |p| p.s)
}

const MASS_TOL: f64 = 1e-12;

/// Central closed interval `[lo, hi]` of 1-based ranks. `lo` is the largest
/// rank with at most `(1 − level)/2` mass strictly below it and `hi` the
/// smallest with at most that much strictly above, so the interval holds at
/// least `level` of the mass.
pub fn rank_interval(row: &[f64], level: f64) -> (usize, usize) {
    let tail = (1.0 - level) / 2.0 + MASS_TOL;
    let mut lo = 1;
    let mut below = 0.0;
    for (i, p) in row.iter().enumerate() {
        if below <= tail {
            lo = i + 1;
        }
        below += p;
    }
    let mut hi = row.len();
    let mut above = 0.0;
    for (i, p) in row.iter().enumerate().rev() {
        if above <= tail {
            hi = i + 1;
        }
        above += p;
    }
    // Lopsided rows can cross the two bounds; keep the interval well formed.
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    (lo, hi)
}

/// Mass of `row` over the closed rank interval.
pub fn interval_mass(row: &[f64], (lo, hi): (usize, usize)) -> f64 {
    row[lo - 1..hi].iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub level: f64,
    /// Mean predictive mass inside the intervals.
    pub avg_mass: f64,
    /// Share of realized ranks inside their interval; boundaries count.
    pub realized_coverage: f64,
    pub intervals: usize,
}

/// Builds the `level` interval of every predictive row and scores it against
/// the realized rank of the same position.
pub fn coverage_report(level: f64, rows: &[Vec<f64>], truths: &[usize]) -> Result<CoverageRow> {
    if rows.len() != truths.len() {
        return Err(contract(format!(
            "{} rows for {} realized ranks",
            rows.len(),
            truths.len()
        )));
    }
    if rows.is_empty() {
        return Err(contract("coverage of no intervals"));
    }
    let mut mass = 0.0;
    let mut hits = 0usize;
    for (row, &truth) in rows.iter().zip(truths) {
        if truth == 0 || truth > row.len() {
            return Err(contract(format!("rank {truth} outside 1..={}", row.len())));
        }
        let iv = rank_interval(row, level);
        mass += interval_mass(row, iv);
        hits += (iv.0 <= truth && truth <= iv.1) as usize;
    }
    let n = rows.len() as f64;
    Ok(CoverageRow {
        level,
        avg_mass: mass / n,
        realized_coverage: hits as f64 / n,
        intervals: rows.len(),
    })
}

pub fn write_survival_csv<W: Write>(writer: W, curve: &[SurvivalPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["u", "S", "at_risk", "events"])?;
    for p in curve {
        w.write_record([
            p.u.to_string(),
            p.s.to_string(),
            p.at_risk.to_string(),
            p.events.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage_csv<W: Write>(writer: W, rows: &[CoverageRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["level", "avg_mass", "realized_coverage"])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.avg_mass.to_string(),
            r.realized_coverage.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
