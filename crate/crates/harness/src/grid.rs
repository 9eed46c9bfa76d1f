//! Hyperparameter grid search: evaluate the configured objective at every
//! candidate tuple (averaged over the same seeded trials), pick the argmin
//! with lexicographic tie-breaking.

use gso_core::error::{GsoError, Result};
use gso_core::metrics::mean_finite;
use serde::Serialize;

use crate::config::{trial_seeds, ExperimentConfig, GridPoint, Objective};
use crate::pool;
use crate::trial::{run_trial, TrialOutput};

/// One evaluated grid point.
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceRow {
    pub mu: Vec<f64>,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Objective value; infinite when any trial failed at this point
    /// (over-regularized tuples legitimately degenerate).
    pub objective: f64,
    pub mean_p_fa: Option<f64>,
    pub mean_p_m: Option<f64>,
    pub failed_trials: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridOutcome {
    pub best: GridPoint,
    pub best_objective: f64,
    pub objective_kind: Objective,
    pub surface: Vec<SurfaceRow>,
}

fn trial_objective(objective: Objective, out: &TrialOutput) -> f64 {
    match objective {
        Objective::MinFaPlusMiss => match (out.report.p_fa, out.report.p_m) {
            (Some(fa), Some(m)) => fa + m,
            _ => f64::INFINITY,
        },
        Objective::MinSteadySigma => {
            // steady state window: last quarter of the identification stage
            let steps = out.identify_steps;
            let window = (steps.div_ceil(4)).max(1).min(steps);
            let sigma = &out.report.sigma_trace[..steps];
            mean_finite(sigma[steps - window..].iter().copied()).unwrap_or(f64::INFINITY)
        }
    }
}

fn evaluate_point(cfg: &ExperimentConfig, point: &GridPoint) -> SurfaceRow {
    let candidate = cfg.with_point(point);
    let seeds = trial_seeds(cfg.run.base_seed, cfg.run.trials);
    let mut objectives = Vec::with_capacity(seeds.len());
    let mut fas = Vec::new();
    let mut misses = Vec::new();
    let mut failed = 0usize;
    for seed in seeds {
        match run_trial(&candidate, seed) {
            Ok(out) => {
                objectives.push(trial_objective(cfg.run.objective, &out));
                if let Some(fa) = out.report.p_fa {
                    fas.push(fa);
                }
                if let Some(m) = out.report.p_m {
                    misses.push(m);
                }
            }
            Err(_) => failed += 1,
        }
    }
    let objective = if failed > 0 || objectives.is_empty() {
        f64::INFINITY
    } else {
        objectives.iter().sum::<f64>() / objectives.len() as f64
    };
    SurfaceRow {
        mu: point.mu.clone(),
        eta: point.eta,
        gamma: point.gamma,
        lambda: point.lambda,
        objective,
        mean_p_fa: mean_finite(fas),
        mean_p_m: mean_finite(misses),
        failed_trials: failed,
    }
}

/// Evaluate every candidate point (in parallel, deterministically reduced)
/// and return the argmin. Ties keep the lexicographically first tuple; a
/// point where any trial fails scores infinity rather than aborting the
/// search.
pub fn grid_search(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    cfg.validate()?;
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| GsoError::invalid("grid search requires a [grid] section"))?;
    let points = grid.points(cfg.model.p_order)?;

    let surface = pool::run_indexed(points.len(), pool::worker_count(), |i| {
        evaluate_point(cfg, &points[i])
    });

    // points are in lexicographic order; strict improvement keeps the first
    let mut best_idx = 0;
    for (i, row) in surface.iter().enumerate() {
        if row.objective < surface[best_idx].objective {
            best_idx = i;
        }
    }
    Ok(GridOutcome {
        best: points[best_idx].clone(),
        best_objective: surface[best_idx].objective,
        objective_kind: cfg.run.objective,
        surface,
    })
}
