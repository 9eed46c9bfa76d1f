//! Reproducible experiment orchestration around `gso-core`: TOML configs,
//! seeded trial execution (generate, simulate, identify, debias, score),
//! hyperparameter grid search, multi-realization aggregation, and CSV/JSON
//! emission.
//!
//! Everything an experiment emits is a pure function of its config and base
//! seed: trials run on a bounded worker pool but results are stored by
//! trial index and reduced in that order, so thread count and scheduling
//! never change a single emitted byte.

pub mod aggregate;
pub mod config;
pub mod emit;
pub mod grid;
pub mod pool;
pub mod trial;

pub use aggregate::{aggregate, Summary};
pub use config::{ExperimentConfig, GridSpec, Objective};
pub use grid::{grid_search, GridOutcome};
pub use trial::{run_trial, TrialError, TrialOutput};

use std::path::Path;

use gso_core::Result;

/// Run the configured experiment and write `config.toml` (resolved),
/// `summary.json` and `traces.csv` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> std::result::Result<Summary, TrialError> {
    cfg.validate().map_err(|e| TrialError {
        stage: "config",
        seed: cfg.run.base_seed,
        source: e,
    })?;
    std::fs::create_dir_all(out_dir).map_err(|e| TrialError {
        stage: "emit",
        seed: cfg.run.base_seed,
        source: e.into(),
    })?;

    let trial_seeds = config::trial_seeds(cfg.run.base_seed, cfg.run.trials);
    let outputs = pool::run_indexed(cfg.run.trials, pool::worker_count(), |i| {
        run_trial(cfg, trial_seeds[i])
    });
    let mut reports = Vec::with_capacity(outputs.len());
    let mut per_trial = Vec::with_capacity(outputs.len());
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        per_trial.push(emit::TrialRow {
            trial: i,
            seed: trial_seeds[i].value(),
            p_fa: out.report.p_fa,
            p_m: out.report.p_m,
            support_accuracy: out.report.support_accuracy,
        });
        reports.push(out.report);
    }
    let summary = aggregate(&reports);
    let emit_err = |e: gso_core::GsoError| TrialError {
        stage: "emit",
        seed: cfg.run.base_seed,
        source: e,
    };
    emit::write_resolved_config(&out_dir.join("config.toml"), cfg).map_err(emit_err)?;
    emit::write_summary_json(&out_dir.join("summary.json"), cfg, &summary, &per_trial).map_err(emit_err)?;
    emit::write_traces_csv(&out_dir.join("traces.csv"), &summary).map_err(emit_err)?;
    Ok(summary)
}

/// Run the configured grid search and write `config.toml`, `surface.csv`
/// and `summary.json` (for the winning point) into `out_dir`.
pub fn run_grid_search(cfg: &ExperimentConfig, out_dir: &Path) -> Result<GridOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let outcome = grid_search(cfg)?;
    emit::write_resolved_config(&out_dir.join("config.toml"), cfg)?;
    emit::write_surface_csv(&out_dir.join("surface.csv"), &outcome)?;
    Ok(outcome)
}
