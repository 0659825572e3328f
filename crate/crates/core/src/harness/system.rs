//! The deterministic cooperative scheduler.
//!
//! Engine ticks, control steps and deletion passes are interleaved on one
//! thread. Data are revealed only while the sampler is paused. Every source of
//! randomness is a seeded stream, so the whole report trace is a function of
//! the configuration, the data and the seed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::accuracy::{
    accuracy_components, conservative_accuracy, AccuracyConfig, ACCURACY_SENTINEL,
};
use crate::analysis::SampleLifetime;
use crate::controller::{control_step, quality, ControlAction, ControlConfig, ControlState};
use crate::engine::{engine_tick, on_target_change, EngineConfig, EngineState};
use crate::error::{Error, Result};
use crate::rng::{stream, streams, StreamRng};
use crate::store::{SampleDatabase, SampleRecord};
use crate::target::{weighted_mean, ModelPlugin, SampleKey, TargetStep};
use crate::updater::{apply_target_change, discard_stale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub control: ControlConfig,
    pub engine: EngineConfig,
    pub accuracy: AccuracyConfig,
    pub n_max_init: usize,
    /// Engine ticks allowed between two pauses before the run is abandoned.
    pub max_ticks: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            control: ControlConfig::default(),
            engine: EngineConfig::default(),
            accuracy: AccuracyConfig::default(),
            n_max_init: 20_000,
            max_ticks: 50_000_000,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        self.engine.validate()?;
        self.accuracy.validate()?;
        if self.n_max_init < self.control.n_min {
            return Err(Error::Config("n_max_init must be at least n_min".into()));
        }
        // Total weight never exceeds the record count, so a smaller N_MIN
        // could never yield enough batches to pause.
        let needed = self.accuracy.largest_b() * self.accuracy.min_batches as f64;
        if (self.control.n_min as f64) < needed {
            return Err(Error::Config(format!(
                "n_min {} is below largest batch length x min_batches = {needed}",
                self.control.n_min
            )));
        }
        Ok(())
    }
}

/// What triggered a report row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportEvent {
    /// A write batch reached the store.
    Flush,
    /// A data batch was just absorbed.
    Reveal,
    /// A control pass while paused.
    Settle,
}

/// One row per control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: u64,
    pub t: u64,
    pub k: u64,
    pub event: ReportEvent,
    /// Empty while the weights are degenerate.
    pub estimate: Vec<f64>,
    pub accuracy: f64,
    pub quality: f64,
    pub ess: f64,
    pub n_records: usize,
    pub n_max: usize,
    pub rmcmc_on: bool,
    pub total_steps: u64,
    pub actions: Vec<ControlAction>,
    pub auxiliary: Vec<f64>,
    pub aux_accuracy: Vec<f64>,
}

/// Accuracy and estimate of one store state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub estimate: Vec<f64>,
    pub accuracy: f64,
    pub ess: f64,
    pub auxiliary: Vec<f64>,
    pub aux_accuracy: Vec<f64>,
}

/// Computes estimates and accuracies, caching estimand values per target.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    accuracy: AccuracyConfig,
    cache_target: u64,
    cache: HashMap<u64, Vec<f64>>,
}

impl Evaluator {
    pub fn new(accuracy: AccuracyConfig) -> Self {
        Self {
            accuracy,
            cache_target: 0,
            cache: HashMap::new(),
        }
    }

    pub fn evaluate<'a, M, I>(&mut self, model: &M, target: u64, records: I) -> Evaluation
    where
        M: ModelPlugin,
        I: IntoIterator<Item = &'a SampleRecord>,
    {
        let records: Vec<&SampleRecord> = records.into_iter().collect();
        if self.cache_target != target || !model.estimand_is_cacheable() {
            self.cache.clear();
            self.cache_target = target;
        }
        let weights: Vec<f64> = records.iter().map(|r| r.weight).collect();
        let mut values = Vec::with_capacity(records.len());
        let mut aux = Vec::with_capacity(records.len());
        for r in &records {
            if r.weight > 0.0 {
                let v = self.cache.entry(r.production_seq).or_insert_with(|| {
                    model.estimand(
                        &r.value,
                        SampleKey {
                            production_seq: r.production_seq,
                            target,
                        },
                    )
                });
                values.push(v.clone());
                aux.push(model.auxiliary(&r.value));
            } else {
                values.push(Vec::new());
                aux.push(Vec::new());
            }
        }
        if self.cache.len() > 2 * records.len() {
            let live: std::collections::HashSet<u64> =
                records.iter().map(|r| r.production_seq).collect();
            self.cache.retain(|k, _| live.contains(k));
        }
        let ess = crate::target::effective_sample_size(&weights).unwrap_or(0.0);
        let estimate = weighted_mean(&weights, &values).unwrap_or_default();
        let accuracy = conservative_accuracy(&weights, &values, &self.accuracy);
        let auxiliary = weighted_mean(&weights, &aux).unwrap_or_default();
        let aux_accuracy = if auxiliary.is_empty() {
            Vec::new()
        } else {
            accuracy_components(&weights, &aux, &self.accuracy)
                .unwrap_or_else(|| vec![ACCURACY_SENTINEL; auxiliary.len()])
        };
        Evaluation {
            estimate,
            accuracy,
            ess,
            auxiliary,
            aux_accuracy,
        }
    }
}

/// Counters behind the run summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub reveals: usize,
    /// Off-to-on switches after the first pause.
    pub resumes: usize,
    /// Raw MCMC steps spent before the first pause.
    pub init_steps: Option<u64>,
    /// Share of records produced at the current target, taken just before
    /// each reveal.
    pub new_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub batches: usize,
    pub resumes: usize,
    pub resumes_per_batch: f64,
    pub total_steps: u64,
    pub init_steps: u64,
    pub avg_new_percent: f64,
    pub final_n: usize,
    pub final_n_max: usize,
    pub final_accuracy: f64,
}

/// Sampler, store and controller driven by a single thread.
pub struct System<M: ModelPlugin> {
    pub(crate) model: M,
    pub(crate) db: SampleDatabase,
    pub(crate) engine: EngineState,
    pub(crate) control: ControlState,
    pub(crate) config: SystemConfig,
    pub(crate) engine_rng: StreamRng,
    pub(crate) updater_rng: StreamRng,
    pub(crate) evaluator: Evaluator,
    pub(crate) reports: Vec<EstimateReport>,
    pub(crate) lifetimes: Vec<SampleLifetime>,
    pub(crate) stats: RunStats,
}

impl<M: ModelPlugin> System<M> {
    /// A system whose model already sits at `start`; the store is empty and
    /// the sampler is on.
    pub fn new(model: M, start: TargetStep, config: SystemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut db = SampleDatabase::new(config.control.n_min, config.n_max_init)?;
        db.set_target(start.n);
        let engine = EngineState::new(&model, start, &config.engine);
        Ok(Self {
            model,
            db,
            engine,
            control: ControlState {
                rmcmc_on: true,
                n_max: config.n_max_init,
            },
            evaluator: Evaluator::new(config.accuracy.clone()),
            config,
            engine_rng: stream(seed, streams::ENGINE),
            updater_rng: stream(seed, streams::UPDATER),
            reports: Vec::new(),
            lifetimes: Vec::new(),
            stats: RunStats::default(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn database(&self) -> &SampleDatabase {
        &self.db
    }

    pub fn engine(&self) -> &EngineState {
        &self.engine
    }

    pub fn control_state(&self) -> ControlState {
        self.control
    }

    pub fn reports(&self) -> &[EstimateReport] {
        &self.reports
    }

    pub fn last_report(&self) -> Option<&EstimateReport> {
        self.reports.last()
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn lifetimes(&self) -> &[SampleLifetime] {
        &self.lifetimes
    }

    pub fn target(&self) -> TargetStep {
        self.engine.current_target
    }

    fn delete(&mut self) {
        let n = self.db.target();
        for r in self.db.drain_overflow() {
            self.lifetimes.push(SampleLifetime {
                batches_survived: n - r.info_cutoff,
                censored: false,
            });
        }
    }

    /// One control step: evaluate, decide, apply `N_MAX`, delete, report.
    fn control(&mut self, event: ReportEvent) -> Result<Vec<ControlAction>> {
        let eval = self
            .evaluator
            .evaluate(&self.model, self.db.target(), self.db.records());
        let q = quality(eval.ess, self.control.n_max);
        let was_on = self.control.rmcmc_on;
        let (next, actions) = control_step(
            eval.accuracy,
            q,
            self.db.len(),
            self.control,
            &self.config.control,
        );
        if self.stats.init_steps.is_some() && !was_on && next.rmcmc_on {
            self.stats.resumes += 1;
        }
        if self.stats.init_steps.is_none() && !next.rmcmc_on {
            self.stats.init_steps = Some(self.engine.total_steps);
        }
        self.control = next;
        self.db.set_n_max(next.n_max)?;
        self.delete();
        let step = self.engine.current_target;
        self.reports.push(EstimateReport {
            n: step.n,
            t: step.t,
            k: step.k,
            event,
            estimate: eval.estimate,
            accuracy: eval.accuracy,
            quality: q,
            ess: eval.ess,
            n_records: self.db.len(),
            n_max: self.control.n_max,
            rmcmc_on: self.control.rmcmc_on,
            total_steps: self.engine.total_steps,
            actions: actions.clone(),
            auxiliary: eval.auxiliary,
            aux_accuracy: eval.aux_accuracy,
        });
        Ok(actions)
    }

    fn insert(&mut self, batch: Vec<SampleRecord>) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        self.db.insert_batch(batch)?;
        self.delete();
        Ok(())
    }

    /// Runs the sampler and the controller until the sampler is paused and
    /// a further control pass changes nothing.
    pub fn settle(&mut self) -> Result<()> {
        if self.reports.is_empty() || self.reports.last().is_some_and(|r| r.n != self.db.target()) {
            self.control(ReportEvent::Reveal)?;
        }
        let mut ticks = 0u64;
        loop {
            while self.control.rmcmc_on {
                if let Some(batch) = engine_tick(
                    &mut self.engine,
                    &self.model,
                    true,
                    &self.config.engine,
                    &mut self.engine_rng,
                )? {
                    self.insert(batch)?;
                    self.control(ReportEvent::Flush)?;
                }
                ticks += 1;
                if ticks > self.config.max_ticks {
                    return Err(Error::Config(format!(
                        "sampler still running after {} ticks at target {}; loosen beta1/beta2 or raise max_ticks",
                        self.config.max_ticks,
                        self.db.target()
                    )));
                }
            }
            // Paused: shrink until the quality band or N_MIN is reached.
            let actions = self.control(ReportEvent::Settle)?;
            if !actions
                .iter()
                .any(|a| matches!(a, ControlAction::Shrink { .. }))
                && !self.control.rmcmc_on
            {
                return Ok(());
            }
        }
    }

    /// Moves every process to `step`, which must follow the current target.
    /// The sampler must be paused.
    pub fn reveal(&mut self, step: TargetStep, batch: M::Batch) -> Result<()> {
        if self.control.rmcmc_on {
            return Err(crate::error::contract(
                "data may only be revealed while paused",
            ));
        }
        let pending = self.engine.flush();
        self.insert(pending)?;
        if !self.db.is_empty() {
            let fresh = self
                .db
                .records()
                .filter(|r| r.info_cutoff == self.db.target())
                .count();
            self.stats
                .new_fractions
                .push(fresh as f64 / self.db.len() as f64);
        }
        match apply_target_change(
            &mut self.db,
            &self.model,
            &step,
            &batch,
            &mut self.updater_rng,
        ) {
            Ok(_) => {}
            Err(Error::DegenerateWeights(_)) => discard_stale(&mut self.db, step.n)?,
            Err(e) => return Err(e),
        }
        on_target_change(
            &mut self.engine,
            &self.model,
            &step,
            &batch,
            &self.config.engine,
            &mut self.engine_rng,
        )?;
        self.model.advance(&step, batch)?;
        self.stats.reveals += 1;
        self.control(ReportEvent::Reveal)?;
        Ok(())
    }

    /// Reveals and settles every batch in order.
    pub fn run<I>(&mut self, batches: I) -> Result<()>
    where
        I: IntoIterator<Item = (TargetStep, M::Batch)>,
    {
        self.settle()?;
        for (step, batch) in batches {
            self.reveal(step, batch)?;
            self.settle()?;
        }
        Ok(())
    }

    /// Lifetimes of every sample, with the ones still stored censored.
    pub fn all_lifetimes(&self) -> Vec<SampleLifetime> {
        let n = self.db.target();
        let mut out = self.lifetimes.clone();
        out.extend(self.db.records().map(|r| SampleLifetime {
            batches_survived: n - r.info_cutoff,
            censored: true,
        }));
        out
    }

    pub fn summary(&self) -> RunSummary {
        let init = self.stats.init_steps.unwrap_or(self.engine.total_steps);
        let avg_new = if self.stats.new_fractions.is_empty() {
            0.0
        } else {
            100.0 * self.stats.new_fractions.iter().sum::<f64>()
                / self.stats.new_fractions.len() as f64
        };
        RunSummary {
            batches: self.stats.reveals,
            resumes: self.stats.resumes,
            resumes_per_batch: if self.stats.reveals == 0 {
                0.0
            } else {
                self.stats.resumes as f64 / self.stats.reveals as f64
            },
            total_steps: self.engine.total_steps,
            init_steps: init,
            avg_new_percent: avg_new,
            final_n: self.db.len(),
            final_n_max: self.control.n_max,
            final_accuracy: self
                .reports
                .last()
                .map_or(ACCURACY_SENTINEL, |r| r.accuracy),
        }
    }

    /// Takes the model back, e.g. to inspect its final state.
    pub fn into_model(self) -> M {
        self.model
    }
}
