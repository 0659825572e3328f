//! Rolling MCMC: a database of weighted posterior samples that follows a
//! sequence of targets as data arrive, with the Monte Carlo error of the
//! reported estimates held inside a user-chosen band.
//!
//! The pieces, bottom up:
//!
//! * [`target`]: target indexing, effective sample size, the weighted
//!   estimator and the [`ModelPlugin`] contract.
//! * [`store`]: the sample database and its deletion pass.
//! * [`updater`]: reweighting or transiting stored samples on a target change.
//! * [`accuracy`]: weighted batch means.
//! * [`controller`]: pausing, resuming and resizing.
//! * [`engine`]: the chain that never restarts.
//! * [`lgm`] and [`football`]: the two bundled models.
//! * [`analysis`]: survival curves, rank intervals and coverage.
//! * [`harness`]: configuration, the schedulers, reports and checkpoints.

pub mod accuracy;
pub mod analysis;
pub mod controller;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod football;
pub mod harness;
pub mod lgm;
pub mod linalg;
pub mod rng;
pub mod store;
pub mod target;
pub mod updater;

pub use accuracy::{conservative_accuracy, AccuracyConfig, AccuracyScale};
pub use controller::{control_step, quality, ControlAction, ControlConfig, ControlState};
pub use engine::{EngineConfig, EngineState};
pub use error::{Error, Result};
pub use store::{SampleDatabase, SampleRecord, SharedStore};
pub use target::{
    effective_sample_size, target_indices, weighted_estimate, ModelPlugin, SampleKey, TargetStep,
    WeightedSample,
};
pub use updater::{apply_target_change, reweight_and_scale, UpdateKind, UpdateOutcome};
