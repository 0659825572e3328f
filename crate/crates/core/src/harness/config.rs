//! Flat TOML run configuration.
//!
//! Every key is optional. Keys left unset take the per-model defaults: the
//! football model samples with burn-in 10 000, subsampling 80, write batches
//! of 1 000 and batch lengths {10, 50}; the linear Gaussian model with
//! burn-in 1 000, no subsampling, write batches of 500 and batch lengths
//! {10, 25}.
//!
//! ```toml
//! seed = 7
//! beta1 = 0.01
//! beta2 = 0.0125
//! lgm_preset = "desk"
//! lgm_batch_size = 5
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::system::SystemConfig;
use crate::accuracy::{AccuracyConfig, AccuracyScale};
use crate::controller::ControlConfig;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::football::data::{BatchMode, SyntheticLeague};
use crate::lgm::LgmSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lgm,
    Football,
    #[serde(alias = "football-synthetic")]
    FootballSynth,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lgm" => Ok(Self::Lgm),
            "football" => Ok(Self::Football),
            "football-synth" | "football-synthetic" => Ok(Self::FootballSynth),
            _ => Err(Error::Config(format!("unknown model '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    #[default]
    Cooperative,
    Concurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_mode: String,
    pub exec_mode: ExecMode,

    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_min: usize,
    pub n_max_init: usize,
    pub resize_fraction: f64,

    pub burn_in: Option<u64>,
    pub subsample: Option<u64>,
    pub write_batch_size: Option<usize>,
    pub transition_burn_in: Option<u64>,
    pub max_ticks: u64,

    pub batch_lengths: Option<Vec<f64>>,
    pub min_batches: usize,
    pub accuracy_scale: AccuracyScale,

    /// `desk`, `paper-lgm` or `custom` (matrices below).
    pub lgm_preset: String,
    pub lgm_a: Option<Vec<Vec<f64>>>,
    pub lgm_b: Option<Vec<Vec<f64>>>,
    pub lgm_sigma: Option<Vec<Vec<f64>>>,
    pub lgm_xi: Option<Vec<Vec<f64>>>,
    pub lgm_mu0: Option<Vec<f64>>,
    pub lgm_sigma0: Option<Vec<Vec<f64>>>,
    /// States simulated when no data file is given.
    pub lgm_states: usize,
    /// States absorbed before sampling starts.
    pub lgm_init_states: usize,
    /// Observations per revealed batch.
    pub lgm_batch_size: usize,

    /// Seasons absorbed before sampling starts.
    pub init_seasons: usize,
    pub synth_teams: usize,
    pub synth_promoted: usize,
    pub synth_seasons: usize,
    /// Rounds of proposal-variance adaptation before the run.
    pub proposal_tuning_rounds: usize,
    pub proposal_tuning_steps: usize,

    /// Poll interval of idle workers in concurrent mode.
    pub poll_ms: u64,
    pub max_wall_seconds: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let control = ControlConfig::default();
        let desk = SyntheticLeague::desk();
        Self {
            seed: 1,
            batch_mode: "single".into(),
            exec_mode: ExecMode::default(),
            beta1: control.beta1,
            beta2: control.beta2,
            gamma1: control.gamma1,
            gamma2: control.gamma2,
            n_min: control.n_min,
            n_max_init: 20_000,
            resize_fraction: control.resize_fraction,
            burn_in: None,
            subsample: None,
            write_batch_size: None,
            transition_burn_in: None,
            max_ticks: 50_000_000,
            batch_lengths: None,
            min_batches: 20,
            accuracy_scale: AccuracyScale::default(),
            lgm_preset: "desk".into(),
            lgm_a: None,
            lgm_b: None,
            lgm_sigma: None,
            lgm_xi: None,
            lgm_mu0: None,
            lgm_sigma0: None,
            lgm_states: 7,
            lgm_init_states: 5,
            lgm_batch_size: 10,
            init_seasons: desk.seasons - 1,
            synth_teams: desk.teams,
            synth_promoted: desk.promoted,
            synth_seasons: desk.seasons,
            proposal_tuning_rounds: 20,
            proposal_tuning_steps: 2_000,
            poll_ms: 1,
            max_wall_seconds: 3_600,
        }
    }
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<nalgebra::DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!(
            "{name} must be a non-empty rectangular matrix"
        )));
    }
    Ok(nalgebra::DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn batch_mode(&self) -> Result<BatchMode> {
        self.batch_mode.parse()
    }

    pub fn control(&self) -> ControlConfig {
        ControlConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            n_min: self.n_min,
            resize_fraction: self.resize_fraction,
        }
    }

    pub fn engine(&self, model: ModelKind) -> EngineConfig {
        let (burn_in, subsample, write) = match model {
            ModelKind::Lgm => (1_000, 1, 500),
            ModelKind::Football | ModelKind::FootballSynth => (10_000, 80, 1_000),
        };
        EngineConfig {
            burn_in: self.burn_in.unwrap_or(burn_in),
            subsample: self.subsample.unwrap_or(subsample),
            write_batch_size: self.write_batch_size.unwrap_or(write),
            transition_burn_in: self.transition_burn_in,
        }
    }

    pub fn accuracy(&self, model: ModelKind) -> AccuracyConfig {
        let default = match model {
            ModelKind::Lgm => vec![10.0, 25.0],
            _ => vec![10.0, 50.0],
        };
        AccuracyConfig {
            batch_lengths: self.batch_lengths.clone().unwrap_or(default),
            min_batches: self.min_batches,
            scale: self.accuracy_scale,
        }
    }

    pub fn system(&self, model: ModelKind) -> Result<SystemConfig> {
        let cfg = SystemConfig {
            control: self.control(),
            engine: self.engine(model),
            accuracy: self.accuracy(model),
            n_max_init: self.n_max_init,
            max_ticks: self.max_ticks,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lgm_spec(&self) -> Result<LgmSpec> {
        match self.lgm_preset.as_str() {
            "desk" => Ok(LgmSpec::desk()),
            "paper-lgm" => Ok(LgmSpec::twenty_teams()),
            "custom" => {
                let need = |m: &Option<Vec<Vec<f64>>>, name: &str| {
                    m.as_deref()
                        .ok_or_else(|| Error::Config(format!("custom LGM needs {name}")))
                        .and_then(|rows| matrix(rows, name))
                };
                let mu0 = self
                    .lgm_mu0
                    .clone()
                    .ok_or_else(|| Error::Config("custom LGM needs lgm_mu0".into()))?;
                LgmSpec::new(
                    need(&self.lgm_a, "lgm_a")?,
                    need(&self.lgm_b, "lgm_b")?,
                    need(&self.lgm_sigma, "lgm_sigma")?,
                    need(&self.lgm_xi, "lgm_xi")?,
                    nalgebra::DVector::from_vec(mu0),
                    need(&self.lgm_sigma0, "lgm_sigma0")?,
                )
            }
            other => Err(Error::Config(format!("unknown lgm_preset '{other}'"))),
        }
    }

    pub fn synthetic_league(&self) -> SyntheticLeague {
        SyntheticLeague {
            teams: self.synth_teams,
            promoted: self.synth_promoted,
            seasons: self.synth_seasons,
            ..SyntheticLeague::desk()
        }
    }
}
