//! Threaded execution: sampler, controller, data feed and report sink run as
//! separate workers.
//!
//! The store and the control state are the only shared mutable pieces, each
//! behind a lock. Lock order is engine, model, store. Timing decides how the
//! workers interleave, so this mode is not bit-reproducible; use
//! [`super::System`] when determinism matters.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use super::system::{EstimateReport, Evaluator, ReportEvent, SystemConfig};
use crate::controller::{control_step, quality, ControlState};
use crate::engine::{engine_tick, on_target_change, EngineState};
use crate::error::{Error, Result};
use crate::rng::{stream, streams, StreamRng};
use crate::store::{SampleDatabase, SharedStore, Snapshot};
use crate::target::{ModelPlugin, TargetStep};
use crate::updater::{apply_target_change, discard_stale};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrentOptions {
    /// Sleep between polls of an idle worker.
    pub poll: Duration,
    pub max_wall: Duration,
}

impl Default for ConcurrentOptions {
    fn default() -> Self {
        Self {
            poll: Duration::from_millis(1),
            max_wall: Duration::from_secs(600),
        }
    }
}

#[derive(Debug)]
pub struct ConcurrentOutcome<M> {
    pub model: M,
    pub reports: Vec<EstimateReport>,
    pub snapshot: Snapshot,
    pub reveals: usize,
    pub resumes: usize,
    pub total_steps: u64,
    pub discarded_pending: usize,
}

struct ControlShared {
    state: ControlState,
    /// Target of the latest control pass.
    evaluated: u64,
    paused_once: bool,
    resumes: usize,
}

fn record_error(slot: &Mutex<Option<Error>>, stop: &AtomicBool, e: Error) {
    let mut s = slot.lock().expect("error slot");
    if s.is_none() {
        *s = Some(e);
    }
    stop.store(true, Ordering::SeqCst);
}

pub fn run_concurrent<M>(
    model: M,
    start: TargetStep,
    config: SystemConfig,
    seed: u64,
    batches: Vec<(TargetStep, M::Batch)>,
    options: ConcurrentOptions,
) -> Result<ConcurrentOutcome<M>>
where
    M: ModelPlugin + Send + Sync,
    M::Batch: Send,
{
    config.validate()?;
    let mut db = SampleDatabase::new(config.control.n_min, config.n_max_init)?;
    db.set_target(start.n);
    let store = SharedStore::new(db);
    let engine: Mutex<(EngineState, StreamRng)> = Mutex::new((
        EngineState::new(&model, start, &config.engine),
        stream(seed, streams::ENGINE),
    ));
    let model = RwLock::new(model);
    let control = Mutex::new(ControlShared {
        state: ControlState {
            rmcmc_on: true,
            n_max: config.n_max_init,
        },
        evaluated: 0,
        paused_once: false,
        resumes: 0,
    });
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let (tx, rx) = mpsc::channel::<EstimateReport>();
    let began = Instant::now();
    let mut reveals = 0usize;
    let mut discarded = 0usize;

    let reports = std::thread::scope(|scope| {
        let sink = scope.spawn(move || rx.into_iter().collect::<Vec<_>>());

        scope.spawn(|| {
            while !stop.load(Ordering::SeqCst) {
                if !control.lock().expect("control").state.rmcmc_on {
                    std::thread::sleep(options.poll);
                    continue;
                }
                let mut eng = engine.lock().expect("engine");
                let m = model.read().expect("model");
                let target = eng.0.current_target.n;
                let (state, rng) = &mut *eng;
                match engine_tick(state, &*m, true, &config.engine, rng) {
                    Ok(Some(batch)) => {
                        let mut db = store.write();
                        if db.target() == target {
                            if let Err(e) = db.insert_batch(batch) {
                                record_error(&failure, &stop, e);
                            }
                            db.delete_overflow();
                        }
                    }
                    Ok(None) => {}
                    Err(e) => record_error(&failure, &stop, e),
                }
            }
        });

        let controller = scope.spawn(|| {
            let mut evaluator = Evaluator::new(config.accuracy.clone());
            while !stop.load(Ordering::SeqCst) {
                std::thread::sleep(options.poll);
                let steps = engine.lock().expect("engine").0.current_target;
                let total_steps = engine.lock().expect("engine").0.total_steps;
                let m = model.read().expect("model");
                let snap = store.snapshot();
                if snap.target != steps.n {
                    continue;
                }
                let eval = evaluator.evaluate(&*m, snap.target, &snap.records);
                drop(m);
                let mut c = control.lock().expect("control");
                let q = quality(eval.ess, c.state.n_max);
                let (next, actions) = control_step(
                    eval.accuracy,
                    q,
                    snap.records.len(),
                    c.state,
                    &config.control,
                );
                if c.paused_once && !c.state.rmcmc_on && next.rmcmc_on {
                    c.resumes += 1;
                }
                c.paused_once |= !next.rmcmc_on;
                c.state = next;
                c.evaluated = snap.target;
                let n_records = {
                    let mut db = store.write();
                    if let Err(e) = db.set_n_max(next.n_max) {
                        record_error(&failure, &stop, e);
                    }
                    db.delete_overflow();
                    db.len()
                };
                let report = EstimateReport {
                    n: steps.n,
                    t: steps.t,
                    k: steps.k,
                    event: ReportEvent::Flush,
                    estimate: eval.estimate,
                    accuracy: eval.accuracy,
                    quality: q,
                    ess: eval.ess,
                    n_records,
                    n_max: next.n_max,
                    rmcmc_on: next.rmcmc_on,
                    total_steps,
                    actions,
                    auxiliary: eval.auxiliary,
                    aux_accuracy: eval.aux_accuracy,
                };
                drop(c);
                let _ = tx.send(report);
            }
            drop(tx);
        });

        // Data feed on this thread.
        let mut updater_rng = stream(seed, streams::UPDATER);
        let wait_paused = |n: u64| -> bool {
            loop {
                if stop.load(Ordering::SeqCst) {
                    return false;
                }
                {
                    let c = control.lock().expect("control");
                    if !c.state.rmcmc_on && c.evaluated == n {
                        return true;
                    }
                }
                if began.elapsed() > options.max_wall {
                    record_error(
                        &failure,
                        &stop,
                        Error::Config(format!("concurrent run exceeded {:?}", options.max_wall)),
                    );
                    return false;
                }
                std::thread::sleep(options.poll);
            }
        };
        let mut current = start.n;
        for (step, batch) in batches {
            if !wait_paused(current) {
                break;
            }
            let mut eng = engine.lock().expect("engine");
            let mut m = model.write().expect("model");
            let mut db = store.write();
            // Records produced against the old target never reach the store.
            discarded += eng.0.discard_pending();
            let res = (|| -> Result<()> {
                match apply_target_change(&mut db, &*m, &step, &batch, &mut updater_rng) {
                    Ok(_) => {}
                    Err(Error::DegenerateWeights(_)) => discard_stale(&mut db, step.n)?,
                    Err(e) => return Err(e),
                }
                let (state, rng) = &mut *eng;
                on_target_change(state, &*m, &step, &batch, &config.engine, rng)?;
                m.advance(&step, batch)?;
                Ok(())
            })();
            if let Err(e) = res {
                record_error(&failure, &stop, e);
                break;
            }
            current = step.n;
            reveals += 1;
        }
        wait_paused(current);
        stop.store(true, Ordering::SeqCst);
        let _ = controller.join();
        sink.join().expect("report sink")
    });

    if let Some(e) = failure.into_inner().expect("error slot") {
        return Err(e);
    }
    let c = control.into_inner().expect("control");
    let (eng, _) = engine.into_inner().expect("engine");
    Ok(ConcurrentOutcome {
        model: model.into_inner().expect("model"),
        reports,
        snapshot: store.snapshot(),
        reveals,
        resumes: c.resumes,
        total_steps: eng.total_steps,
        discarded_pending: discarded,
    })
}
