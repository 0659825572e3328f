//! Persisting a cooperative run.
//!
//! The store goes to the binary record file at the database path; everything
//! else needed to continue (engine state, control state, random streams,
//! counters and the report trace) goes to a JSON sidecar next to it. The
//! model is not persisted: the caller rebuilds it and replays the batches the
//! sidecar says were revealed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::system::{EstimateReport, Evaluator, RunStats, System, SystemConfig};
use crate::analysis::SampleLifetime;
use crate::controller::ControlState;
use crate::engine::EngineState;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::store::SampleDatabase;
use crate::target::ModelPlugin;

const FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: u32,
    pub dimension: usize,
    pub config: SystemConfig,
    pub engine: EngineState,
    pub control: ControlState,
    pub engine_rng: StreamRng,
    pub updater_rng: StreamRng,
    pub stats: RunStats,
    pub lifetimes: Vec<SampleLifetime>,
    pub reports: Vec<EstimateReport>,
}

pub fn sidecar_path(db_path: &Path) -> PathBuf {
    let mut s = db_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_sidecar(db_path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(sidecar_path(db_path))?;
    let side: Sidecar = serde_json::from_str(&text)?;
    if side.format != FORMAT {
        return Err(Error::Corrupt(format!(
            "unknown checkpoint format {}",
            side.format
        )));
    }
    Ok(side)
}

impl<M: ModelPlugin> System<M> {
    /// Writes the store and its sidecar.
    pub fn checkpoint(&self, db_path: &Path) -> Result<()> {
        let dimension = self.model.dimension();
        self.db.save(db_path, dimension)?;
        let side = Sidecar {
            format: FORMAT,
            dimension,
            config: self.config.clone(),
            engine: self.engine.clone(),
            control: self.control,
            engine_rng: self.engine_rng.clone(),
            updater_rng: self.updater_rng.clone(),
            stats: self.stats.clone(),
            lifetimes: self.lifetimes.clone(),
            reports: self.reports.clone(),
        };
        std::fs::write(sidecar_path(db_path), serde_json::to_vec(&side)?)?;
        Ok(())
    }

    /// Rebuilds a system from a checkpoint. `model` must already have
    /// absorbed the same batches as the checkpointed one.
    pub fn restore(model: M, db_path: &Path) -> Result<Self> {
        let side = read_sidecar(db_path)?;
        if model.dimension() != side.dimension {
            return Err(Error::Corrupt(format!(
                "model dimension {} does not match checkpoint dimension {}",
                model.dimension(),
                side.dimension
            )));
        }
        let mut db = SampleDatabase::new(
            side.config.control.n_min,
            side.control.n_max.max(side.config.control.n_min),
        )?;
        db.load(db_path, side.dimension)?;
        if db.target() != side.engine.current_target.n {
            return Err(Error::Corrupt("store and engine targets disagree".into()));
        }
        Ok(Self {
            model,
            db,
            engine: side.engine,
            control: side.control,
            evaluator: Evaluator::new(side.config.accuracy.clone()),
            config: side.config,
            engine_rng: side.engine_rng,
            updater_rng: side.updater_rng,
            reports: side.reports,
            lifetimes: side.lifetimes,
            stats: side.stats,
        })
    }
}
