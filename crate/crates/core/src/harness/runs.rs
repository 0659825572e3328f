//! End-to-end runs for the bundled models: data loading, initialization,
//! the scheduler loop, checkpoints and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::DVector;
use rand::Rng;

use super::checkpoint::read_sidecar;
use super::concurrent::{run_concurrent, ConcurrentOptions};
use super::config::{ExecMode, ModelKind, RunConfig};
use super::output::{
    read_final_ranks, read_lifetimes, read_rank_predictions, write_final_ranks, write_lifetimes,
    write_parameters, write_rank_matrix, write_rank_predictions, write_reports, write_summary,
    FinalRank, RankPrediction, SummaryRow,
};
use super::system::{EstimateReport, RunSummary, System, SystemConfig};
use crate::analysis::{
    coverage_report, kaplan_meier, write_coverage_csv, write_survival_csv, CoverageRow,
};
use crate::engine::tune_subsample_multi;
use crate::error::{Error, Result};
use crate::football::data::{reveal_plan, BatchMode, LeagueData};
use crate::football::{Football, FootballBatch, Theta};
use crate::lgm::{lgm_simulate, reveal_schedule, Lgm, LgmSpec};
use crate::rng::{stream, streams};
use crate::target::{ModelPlugin, SampleKey, TargetStep};

/// A model that has absorbed its initialization data, and the batches still
/// to come.
pub struct Prepared<M: ModelPlugin> {
    pub model: M,
    pub start: TargetStep,
    pub reveal: Vec<(TargetStep, M::Batch)>,
}

/// Advances a fresh model through `init` and returns the target reached.
fn absorb<M: ModelPlugin>(model: &mut M, init: Vec<(TargetStep, M::Batch)>) -> Result<TargetStep> {
    let mut at = TargetStep::first();
    for (step, batch) in init {
        model.advance(&step, batch)?;
        at = step;
    }
    Ok(at)
}

/// Full observation vectors, one per state, from a CSV with header
/// `state,row,y`. States are 1-based, rows 0-based, and every state must
/// list all `m` rows.
pub fn read_lgm_observations(path: &Path, m: usize) -> Result<Vec<DVector<f64>>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut states: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    let err = |line: u64, message: String| Error::Parse {
        path: path.into(),
        line: line as usize,
        message,
    };
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(err(line, "expected state,row,y".into()));
        }
        let state: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad state '{}'", &rec[0])))?;
        let row: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad row '{}'", &rec[1])))?;
        let y: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| err(line, format!("bad value '{}'", &rec[2])))?;
        if state == 0 || row >= m {
            return Err(err(line, format!("state {state} row {row} out of range")));
        }
        states.entry(state).or_insert_with(|| vec![None; m])[row] = Some(y);
    }
    let mut out = Vec::new();
    for (i, (state, rows)) in states.into_iter().enumerate() {
        if state != i + 1 || rows.iter().any(Option::is_none) {
            return Err(Error::Config(format!(
                "{}: state {state} is missing or incomplete",
                path.display()
            )));
        }
        out.push(DVector::from_iterator(m, rows.into_iter().flatten()));
    }
    Ok(out)
}

pub fn write_lgm_observations(path: &Path, obs: &[DVector<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "row", "y"])?;
    for (s, y) in obs.iter().enumerate() {
        for (r, v) in y.iter().enumerate() {
            w.write_record([(s + 1).to_string(), r.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn prepare_lgm(
    spec: LgmSpec,
    obs: &[DVector<f64>],
    init_states: usize,
    batch_size: usize,
) -> Result<Prepared<Lgm>> {
    if init_states == 0 || init_states > obs.len().max(1) {
        return Err(Error::Config(format!(
            "lgm_init_states must be in 1..={}",
            obs.len().max(1)
        )));
    }
    let schedule = reveal_schedule(obs, batch_size);
    let (init, reveal): (Vec<_>, Vec<_>) = schedule
        .into_iter()
        .partition(|(s, _)| s.t as usize <= init_states);
    let mut model = Lgm::new(spec)?;
    let start = absorb(&mut model, init)?;
    Ok(Prepared {
        model,
        start,
        reveal,
    })
}

/// The football model after its initial seasons, with proposal variances
/// adapted on the initial posterior.
pub fn prepare_football(
    data: &LeagueData,
    init_seasons: usize,
    mode: BatchMode,
    cfg: &RunConfig,
) -> Result<Prepared<Football>> {
    let plan = reveal_plan(data, init_seasons, mode)?;
    let predict_seed: u64 = stream(cfg.seed, streams::PREDICT).random();
    let mut model = Football::new(&plan.first, predict_seed)?;
    let start = absorb(&mut model, plan.init)?;
    if cfg.proposal_tuning_rounds > 0 {
        let mut rng = stream(cfg.seed, streams::TUNING);
        let mut state = model.initial_state();
        model.tune_proposals(
            &mut state,
            cfg.proposal_tuning_rounds,
            cfg.proposal_tuning_steps,
            0.234,
            &mut rng,
        );
    }
    Ok(Prepared {
        model,
        start,
        reveal: plan.reveal,
    })
}

/// Where a run reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub model: ModelKind,
    pub config: RunConfig,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub db_path: Option<PathBuf>,
    /// Continue from the checkpoint at `db_path`.
    pub resume: bool,
    /// Stop (and checkpoint) once this many batches have been revealed.
    pub stop_after: Option<usize>,
}

/// Runs the cooperative scheduler, resuming from and writing checkpoints as
/// requested.
pub fn drive<M: ModelPlugin>(
    prepared: Prepared<M>,
    config: SystemConfig,
    seed: u64,
    db_path: Option<&Path>,
    resume: bool,
    stop_after: Option<usize>,
) -> Result<System<M>>
where
    M::Batch: Clone,
{
    let Prepared {
        mut model,
        start,
        reveal,
    } = prepared;
    let mut system = if resume {
        let path = db_path.ok_or_else(|| Error::Config("--resume needs --db-path".into()))?;
        let done = read_sidecar(path)?.stats.reveals;
        if done > reveal.len() {
            return Err(Error::Corrupt(
                "checkpoint has more batches than the data".into(),
            ));
        }
        for (step, batch) in &reveal[..done] {
            model.advance(step, batch.clone())?;
        }
        System::restore(model, path)?
    } else {
        let mut s = System::new(model, start, config, seed)?;
        s.settle()?;
        s
    };
    let done = system.stats().reveals;
    let end = stop_after.map_or(reveal.len(), |k| k.clamp(done, reveal.len()));
    for (step, batch) in reveal.into_iter().take(end).skip(done) {
        system.reveal(step, batch)?;
        system.settle()?;
    }
    if let Some(path) = db_path {
        system.checkpoint(path)?;
    }
    Ok(system)
}

/// The settled report of every target, i.e. the last report at each `n`.
pub fn settled_reports(reports: &[EstimateReport]) -> Vec<&EstimateReport> {
    let mut out: Vec<&EstimateReport> = Vec::new();
    for r in reports {
        match out.last_mut() {
            Some(last) if last.n == r.n => *last = r,
            _ => out.push(r),
        }
    }
    out
}

fn football_outputs(
    out: &Path,
    data: &LeagueData,
    reports: &[EstimateReport],
    init_seasons: usize,
) -> Result<()> {
    let mut preds = Vec::new();
    for r in settled_reports(reports) {
        let season = &data.seasons[r.t as usize - 1];
        if (r.t as usize) <= init_seasons || r.estimate.is_empty() {
            continue;
        }
        let n = season.teams.len();
        for (i, team) in season.teams.iter().enumerate() {
            preds.push(RankPrediction {
                target: r.n,
                season: r.t,
                team: data.team_names[*team].clone(),
                probs: r.estimate[i * n..(i + 1) * n].to_vec(),
            });
        }
    }
    write_rank_predictions(&out.join("rankpred.csv"), &preds)?;
    let mut finals = Vec::new();
    for (s, season) in data.seasons.iter().enumerate().skip(init_seasons) {
        for (team, rank) in season.teams.iter().zip(season.final_ranks()) {
            finals.push(FinalRank {
                season: s as u64 + 1,
                team: data.team_names[*team].clone(),
                rank,
            });
        }
    }
    write_final_ranks(&out.join("final_ranks.csv"), &finals)?;
    if let Some(last) = reports.last() {
        let season = &data.seasons[last.t as usize - 1];
        let n = season.teams.len();
        if last.estimate.len() == n * n {
            let names: Vec<String> = season
                .teams
                .iter()
                .map(|t| data.team_names[*t].clone())
                .collect();
            let probs: Vec<Vec<f64>> = (0..n)
                .map(|i| last.estimate[i * n..(i + 1) * n].to_vec())
                .collect();
            write_rank_matrix(&out.join("rankdist.csv"), &names, &probs)?;
        }
        write_parameters(
            &out.join("parameters.csv"),
            &Theta::NAMES,
            &last.auxiliary,
            &last.aux_accuracy,
        )?;
    }
    Ok(())
}

fn football_data(req: &RunRequest) -> Result<LeagueData> {
    match (req.model, &req.data) {
        (ModelKind::Football, Some(path)) => LeagueData::load(path),
        (ModelKind::Football, None) => Err(Error::Config("--model football needs --data".into())),
        (_, Some(path)) if path.exists() => LeagueData::load(path),
        (_, path) => {
            let (data, _) = req
                .config
                .synthetic_league()
                .generate(&mut stream(req.config.seed, streams::DATA))?;
            if let Some(path) = path {
                data.save(path)?;
            }
            Ok(data)
        }
    }
}

fn lgm_data(req: &RunRequest, spec: &LgmSpec) -> Result<Vec<DVector<f64>>> {
    match &req.data {
        Some(path) if path.exists() => read_lgm_observations(path, spec.m()),
        path => {
            let (_, obs) = lgm_simulate(
                spec,
                req.config.lgm_states,
                &mut stream(req.config.seed, streams::DATA),
            )?;
            if let Some(path) = path {
                write_lgm_observations(path, &obs)?;
            }
            Ok(obs)
        }
    }
}

fn finish(
    out: &Path,
    model: &str,
    mode: &str,
    sizes: &[usize],
    reports: &[EstimateReport],
    summary: &RunSummary,
    lifetimes: &[crate::analysis::SampleLifetime],
) -> Result<()> {
    write_reports(&out.join("reports.csv"), reports)?;
    write_summary(
        &out.join("summary.csv"),
        &SummaryRow::new(model, mode, sizes, summary),
    )?;
    write_lifetimes(&out.join("lifetimes.csv"), lifetimes)?;
    Ok(())
}

fn concurrent_summary(
    o_reports: &[EstimateReport],
    reveals: usize,
    resumes: usize,
    total_steps: u64,
    n: usize,
) -> RunSummary {
    let last = o_reports.last();
    RunSummary {
        batches: reveals,
        resumes,
        resumes_per_batch: if reveals == 0 {
            0.0
        } else {
            resumes as f64 / reveals as f64
        },
        total_steps,
        init_steps: 0,
        avg_new_percent: 0.0,
        final_n: n,
        final_n_max: last.map_or(0, |r| r.n_max),
        final_accuracy: last.map_or(-1.0, |r| r.accuracy),
    }
}

/// The `run` command.
pub fn execute(req: &RunRequest) -> Result<RunSummary> {
    std::fs::create_dir_all(&req.out)?;
    let cfg = &req.config;
    let system_cfg = cfg.system(req.model)?;
    let options = ConcurrentOptions {
        poll: Duration::from_millis(cfg.poll_ms),
        max_wall: Duration::from_secs(cfg.max_wall_seconds),
    };
    let concurrent = cfg.exec_mode == ExecMode::Concurrent;
    if concurrent && (req.resume || req.db_path.is_some()) {
        return Err(Error::Config(
            "checkpoints are only available in cooperative mode".into(),
        ));
    }
    match req.model {
        ModelKind::Lgm => {
            let spec = cfg.lgm_spec()?;
            let obs = lgm_data(req, &spec)?;
            let prepared = prepare_lgm(spec, &obs, cfg.lgm_init_states, cfg.lgm_batch_size)?;
            let sizes: Vec<usize> = prepared
                .reveal
                .iter()
                .map(|(_, b)| b.rows.len())
                .filter(|&n| n > 0)
                .collect();
            let mode = format!("{}-obs", cfg.lgm_batch_size);
            if concurrent {
                let o = run_concurrent(
                    prepared.model,
                    prepared.start,
                    system_cfg,
                    cfg.seed,
                    prepared.reveal,
                    options,
                )?;
                let summary = concurrent_summary(
                    &o.reports,
                    o.reveals,
                    o.resumes,
                    o.total_steps,
                    o.snapshot.records.len(),
                );
                finish(&req.out, "lgm", &mode, &sizes, &o.reports, &summary, &[])?;
                return Ok(summary);
            }
            let sys = drive(
                prepared,
                system_cfg,
                cfg.seed,
                req.db_path.as_deref(),
                req.resume,
                req.stop_after,
            )?;
            let summary = sys.summary();
            finish(
                &req.out,
                "lgm",
                &mode,
                &sizes,
                sys.reports(),
                &summary,
                &sys.all_lifetimes(),
            )?;
            Ok(summary)
        }
        ModelKind::Football | ModelKind::FootballSynth => {
            let data = football_data(req)?;
            let mode = cfg.batch_mode()?;
            let prepared = prepare_football(&data, cfg.init_seasons, mode, cfg)?;
            let sizes: Vec<usize> = prepared
                .reveal
                .iter()
                .filter_map(|(_, b)| match b {
                    FootballBatch::Results(r) => Some(r.len()),
                    FootballBatch::NewSeason(_) => None,
                })
                .collect();
            let name = if req.model == ModelKind::Football {
                "football"
            } else {
                "football-synth"
            };
            if concurrent {
                let o = run_concurrent(
                    prepared.model,
                    prepared.start,
                    system_cfg,
                    cfg.seed,
                    prepared.reveal,
                    options,
                )?;
                let summary = concurrent_summary(
                    &o.reports,
                    o.reveals,
                    o.resumes,
                    o.total_steps,
                    o.snapshot.records.len(),
                );
                finish(
                    &req.out,
                    name,
                    &mode.to_string(),
                    &sizes,
                    &o.reports,
                    &summary,
                    &[],
                )?;
                football_outputs(&req.out, &data, &o.reports, cfg.init_seasons)?;
                return Ok(summary);
            }
            let sys = drive(
                prepared,
                system_cfg,
                cfg.seed,
                req.db_path.as_deref(),
                req.resume,
                req.stop_after,
            )?;
            let summary = sys.summary();
            finish(
                &req.out,
                name,
                &mode.to_string(),
                &sizes,
                sys.reports(),
                &summary,
                &sys.all_lifetimes(),
            )?;
            football_outputs(&req.out, &data, sys.reports(), cfg.init_seasons)?;
            Ok(summary)
        }
    }
}

/// Result of the `tune-subsample` command.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub subsample: u64,
    pub pilot_steps: usize,
    pub statistics: usize,
}

/// Runs a pilot chain at the initial target (after burn-in) and picks the
/// smallest thinning interval whose inflation is at most `target_rho` for
/// every tuning statistic.
pub fn tune_pilot<M: ModelPlugin>(
    model: &M,
    start: TargetStep,
    burn_in: u64,
    pilot_steps: usize,
    target_rho: f64,
    seed: u64,
) -> Result<TuneResult> {
    let mut rng = stream(seed, streams::TUNING);
    let mut state = model.initial_state();
    for _ in 0..burn_in {
        model.mcmc_step(&mut state, &mut rng)?;
    }
    let mut pilot = Vec::with_capacity(pilot_steps);
    for i in 0..pilot_steps {
        model.mcmc_step(&mut state, &mut rng)?;
        pilot.push(model.tuning_statistics(
            &state,
            SampleKey {
                production_seq: i as u64,
                target: start.n,
            },
        ));
    }
    let statistics = pilot.first().map_or(0, Vec::len);
    Ok(TuneResult {
        subsample: tune_subsample_multi(&pilot, target_rho)?,
        pilot_steps,
        statistics,
    })
}

/// The `tune-subsample` command.
pub fn tune(req: &RunRequest, pilot_steps: usize, target_rho: f64) -> Result<TuneResult> {
    let cfg = &req.config;
    let burn_in = cfg.engine(req.model).burn_in;
    match req.model {
        ModelKind::Lgm => {
            let spec = cfg.lgm_spec()?;
            let obs = lgm_data(req, &spec)?;
            let p = prepare_lgm(spec, &obs, cfg.lgm_init_states, cfg.lgm_batch_size)?;
            tune_pilot(
                &p.model,
                p.start,
                burn_in,
                pilot_steps,
                target_rho,
                cfg.seed,
            )
        }
        _ => {
            let data = football_data(req)?;
            let p = prepare_football(&data, cfg.init_seasons, cfg.batch_mode()?, cfg)?;
            tune_pilot(
                &p.model,
                p.start,
                burn_in,
                pilot_steps,
                target_rho,
                cfg.seed,
            )
        }
    }
}

/// The `analyze --survival` command: reads `lifetimes.csv`, writes
/// `survival.csv`.
pub fn analyze_survival(dir: &Path) -> Result<usize> {
    let lifetimes = read_lifetimes(&dir.join("lifetimes.csv"))?;
    let curve = kaplan_meier(&lifetimes);
    write_survival_csv(std::fs::File::create(dir.join("survival.csv"))?, &curve)?;
    Ok(curve.len())
}

/// The `analyze --coverage` command: scores every stored rank prediction
/// against the realized final table at levels 0.5 and 0.95.
pub fn analyze_coverage(dir: &Path) -> Result<Vec<CoverageRow>> {
    let preds = read_rank_predictions(&dir.join("rankpred.csv"))?;
    let finals = read_final_ranks(&dir.join("final_ranks.csv"))?;
    let mut rows = Vec::new();
    let mut truths = Vec::new();
    for p in preds {
        let key = (p.season, p.team.clone());
        let truth = *finals.get(&key).ok_or_else(|| {
            Error::Config(format!(
                "no final rank for {} in season {}",
                p.team, p.season
            ))
        })?;
        rows.push(p.probs);
        truths.push(truth);
    }
    let report = [0.5, 0.95]
        .iter()
        .map(|&level| coverage_report(level, &rows, &truths))
        .collect::<Result<Vec<_>>>()?;
    write_coverage_csv(std::fs::File::create(dir.join("coverage.csv"))?, &report)?;
    Ok(report)
}
