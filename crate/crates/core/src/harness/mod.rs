//! Experiment orchestration: configuration, replicated runs, aggregation,
//! emission and bound verification.

pub mod aggregate;
pub mod config;
pub mod emit;
pub mod run;
pub mod verify;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use aggregate::{aggregate, AggregateRow};
pub use config::{ExperimentConfig, PolicySpec};
pub use emit::{emit, Manifest};
pub use run::{run_experiment, run_matrix, run_single, ExperimentResult, RunOverrides, RunSettings, RunTrace};
pub use verify::{verify_bounds, verify_dir, VerifyReport};

use crate::error::Result;

/// Runs a configuration and writes every artifact to `out_dir`.
pub fn run_and_emit(cfg: &ExperimentConfig, threads: Option<usize>, out_dir: &Path) -> Result<(ExperimentResult, Manifest)> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let result = run_experiment(cfg, threads)?;
    let manifest = Manifest {
        version: emit::version_string(),
        started_unix: started,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        master_seed: cfg.experiment.seed,
        replicates: cfg.experiment.replicates,
        horizon: cfg.experiment.horizon,
        policies: result.labels.clone(),
        config: Some(cfg.to_toml_string()),
        runs: result.traces.iter().map(|t| t.summary.clone()).collect(),
    };
    emit(&result.traces, &result.aggregate, &manifest, out_dir)?;
    Ok((result, manifest))
}
