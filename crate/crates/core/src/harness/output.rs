//! CSV files written by a run and read back by `analyze`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::system::{EstimateReport, RunSummary};
use crate::analysis::SampleLifetime;
use crate::error::{Error, Result};

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

/// One row per control step. Vector fields are space-separated.
pub fn write_reports(path: &Path, reports: &[EstimateReport]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "n",
        "t",
        "k",
        "event",
        "rmcmc_on",
        "accuracy",
        "quality",
        "ess",
        "n_records",
        "n_max",
        "total_steps",
        "actions",
        "estimate",
        "auxiliary",
        "aux_accuracy",
    ])?;
    for r in reports {
        let event = serde_json::to_value(r.event)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let actions = r
            .actions
            .iter()
            .map(|a| format!("{a:?}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.n.to_string(),
            r.t.to_string(),
            r.k.to_string(),
            event,
            r.rmcmc_on.to_string(),
            r.accuracy.to_string(),
            r.quality.to_string(),
            r.ess.to_string(),
            r.n_records.to_string(),
            r.n_max.to_string(),
            r.total_steps.to_string(),
            actions,
            join(&r.estimate),
            join(&r.auxiliary),
            join(&r.aux_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run-level counters in one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub batch_mode: String,
    pub batches: usize,
    pub min_batch_size: usize,
    pub max_batch_size: usize,
    pub resumes: usize,
    pub resumes_per_batch: f64,
    pub total_steps: u64,
    pub init_steps: u64,
    pub avg_new_percent: f64,
    pub final_n: usize,
    pub final_n_max: usize,
    pub final_accuracy: f64,
}

impl SummaryRow {
    pub fn new(model: &str, batch_mode: &str, sizes: &[usize], s: &RunSummary) -> Self {
        Self {
            model: model.into(),
            batch_mode: batch_mode.into(),
            batches: s.batches,
            min_batch_size: sizes.iter().copied().min().unwrap_or(0),
            max_batch_size: sizes.iter().copied().max().unwrap_or(0),
            resumes: s.resumes,
            resumes_per_batch: s.resumes_per_batch,
            total_steps: s.total_steps,
            init_steps: s.init_steps,
            avg_new_percent: s.avg_new_percent,
            final_n: s.final_n,
            final_n_max: s.final_n_max,
            final_accuracy: s.final_accuracy,
        }
    }
}

pub fn write_summary(path: &Path, row: &SummaryRow) -> Result<()> {
    let mut w = writer(path)?;
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

pub fn write_lifetimes(path: &Path, lifetimes: &[SampleLifetime]) -> Result<()> {
    let mut w = writer(path)?;
    for l in lifetimes {
        w.serialize(l)?;
    }
    if lifetimes.is_empty() {
        w.write_record(["batches_survived", "censored"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lifetimes(path: &Path) -> Result<Vec<SampleLifetime>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

/// Parameter estimates and their accuracies.
pub fn write_parameters(
    path: &Path,
    names: &[&str],
    estimate: &[f64],
    accuracy: &[f64],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["name", "estimate", "accuracy"])?;
    for (i, name) in names.iter().enumerate() {
        w.write_record([
            name.to_string(),
            estimate.get(i).map_or(String::new(), f64::to_string),
            accuracy.get(i).map_or(String::new(), f64::to_string),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rank probabilities in percent, one row per team.
pub fn write_rank_matrix(path: &Path, teams: &[String], probs: &[Vec<f64>]) -> Result<()> {
    let mut w = writer(path)?;
    let n = probs.first().map_or(0, Vec::len);
    let mut header = vec!["team".to_string()];
    header.extend((1..=n).map(|r| format!("rank_{r}")));
    w.write_record(&header)?;
    for (team, row) in teams.iter().zip(probs) {
        let mut rec = vec![team.clone()];
        rec.extend(row.iter().map(|p| format!("{:.2}", 100.0 * p)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A team's predictive rank distribution at one target.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPrediction {
    pub target: u64,
    pub season: u64,
    pub team: String,
    pub probs: Vec<f64>,
}

pub fn write_rank_predictions(path: &Path, preds: &[RankPrediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(["target", "season", "team", "probs"])?;
    for p in preds {
        w.write_record([
            p.target.to_string(),
            p.season.to_string(),
            p.team.clone(),
            join(&p.probs),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line: line as usize,
        message: message.into(),
    }
}

pub fn read_rank_predictions(path: &Path) -> Result<Vec<RankPrediction>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(parse_err(path, line, "expected 4 fields"));
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(path, line, format!("bad integer '{s}'")))
        };
        let probs = rec[3]
            .split_whitespace()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad probability '{x}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(RankPrediction {
            target: num(&rec[0])?,
            season: num(&rec[1])?,
            team: rec[2].to_string(),
            probs,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalRank {
    pub season: u64,
    pub team: String,
    pub rank: usize,
}

pub fn write_final_ranks(path: &Path, ranks: &[FinalRank]) -> Result<()> {
    let mut w = writer(path)?;
    for r in ranks {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_final_ranks(path: &Path) -> Result<HashMap<(u64, String), usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for rec in r.deserialize::<FinalRank>() {
        let rec = rec?;
        out.insert((rec.season, rec.team), rec.rank);
    }
    Ok(out)
}
