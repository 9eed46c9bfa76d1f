//! Output files of an experiment directory: resolved `config.toml`,
//! `summary.json`, `traces.csv`, `surface.csv`. Everything written here is
//! a deterministic function of the numbers passed in.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gso_core::error::{GsoError, Result};
use gso_core::metrics::PhaseTrace;
use serde::Serialize;

use crate::aggregate::Summary;
use crate::config::ExperimentConfig;
use crate::grid::GridOutcome;

#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub p_fa: Option<f64>,
    pub p_m: Option<f64>,
    pub support_accuracy: f64,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    topology: &'a str,
    path: u8,
    trials: usize,
    base_seed: u64,
    t_star: usize,
    t_end: usize,
    mean_p_fa: Option<f64>,
    mean_p_m: Option<f64>,
    mean_support_accuracy: f64,
    per_trial: &'a [TrialRow],
    mean_sigma_trace: &'a [f64],
    mean_zeta_trace: &'a [f64],
}

fn topology_name(cfg: &ExperimentConfig) -> &'static str {
    use gso_core::topology::TopologyParams::*;
    match cfg.topology.params {
        Random(_) => "random",
        PowerLaw(_) => "powerlaw",
        Sbm(_) => "sbm",
    }
}

pub fn write_resolved_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = toml::to_string_pretty(cfg)
        .map_err(|e| GsoError::invalid(format!("config serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_summary_json(
    path: &Path,
    cfg: &ExperimentConfig,
    summary: &Summary,
    per_trial: &[TrialRow],
) -> Result<()> {
    let doc = SummaryJson {
        topology: topology_name(cfg),
        path: cfg.hyper.path,
        trials: summary.trials,
        base_seed: cfg.run.base_seed,
        t_star: cfg.model.t_star,
        t_end: cfg.model.t_end,
        mean_p_fa: summary.mean_p_fa,
        mean_p_m: summary.mean_p_m,
        mean_support_accuracy: summary.mean_support_accuracy,
        per_trial,
        mean_sigma_trace: &summary.mean_sigma_trace,
        mean_zeta_trace: &summary.mean_zeta_trace,
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| GsoError::invalid(format!("summary serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Columns: t, sigma_t, zeta_t, nnz. For a multi-trial summary the values
/// are per-step means (nnz becomes fractional).
pub fn write_traces_csv(path: &Path, summary: &Summary) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,sigma_t,zeta_t,nnz")?;
    for i in 0..summary.mean_sigma_trace.len() {
        let sigma = summary.mean_sigma_trace[i];
        let zeta = summary.mean_zeta_trace.get(i).copied().unwrap_or(f64::NAN);
        let nnz = summary.mean_w_nnz_trace.get(i).copied().unwrap_or(f64::NAN);
        writeln!(out, "{},{},{},{}", i + 1, fmt_cell(sigma), fmt_cell(zeta), fmt_cell(nnz))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-run trace emitted by the identify/debias CLI paths; same columns,
/// integral nnz.
pub fn write_phase_trace_csv(path: &Path, trace: &PhaseTrace) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,sigma_t,zeta_t,nnz")?;
    for i in 0..trace.len() {
        writeln!(
            out,
            "{},{},{},{}",
            trace.start_t + i,
            fmt_cell(trace.sigma[i]),
            fmt_cell(trace.zeta[i]),
            trace.w_nnz[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_surface_csv(path: &Path, outcome: &GridOutcome) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let p_order = outcome.best.mu.len();
    let mu_heads: Vec<String> = (1..=p_order).map(|p| format!("mu{p}")).collect();
    writeln!(out, "{},eta,gamma,lambda,objective,mean_p_fa,mean_p_m,failed_trials", mu_heads.join(","))?;
    for row in &outcome.surface {
        let mus: Vec<String> = row.mu.iter().map(|v| fmt_cell(*v)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            mus.join(","),
            fmt_cell(row.eta),
            fmt_cell(row.gamma),
            fmt_cell(row.lambda),
            fmt_cell(row.objective),
            row.mean_p_fa.map_or("NaN".into(), fmt_cell),
            row.mean_p_m.map_or("NaN".into(), fmt_cell),
            row.failed_trials
        )?;
    }
    out.flush()?;
    Ok(())
}
