//! Running the system: configuration, schedulers, checkpoints and files.

pub mod checkpoint;
pub mod concurrent;
pub mod config;
pub mod output;
pub mod runs;
pub mod system;

pub use concurrent::{run_concurrent, ConcurrentOptions, ConcurrentOutcome};
pub use config::{ExecMode, ModelKind, RunConfig};
pub use runs::{drive, execute, prepare_football, prepare_lgm, tune, Prepared, RunRequest};
pub use system::{EstimateReport, Evaluator, ReportEvent, RunSummary, System, SystemConfig};
