//! TOML experiment configuration: sections `[topology]`, `[model]`,
//! `[hyper]`, `[grid]` (optional), `[run]`.
//!
//! Sample counts are in retained-stream coordinates: after the burn-in is
//! discarded, the identification stage consumes samples `1..=t_star` and
//! the debias stage `t_star+1..=t_end`, with
//! `t_star < t_end <= t_total - burn_in`.

use std::path::Path;

use gso_core::debias::MaskMode;
use gso_core::error::{GsoError, Result};
use gso_core::identify::{HyperParams, Path as AlgPath};
use gso_core::topology::{splitmix64, RngSeed, TopologySpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub model: ModelConfig,
    pub hyper: HyperConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub run: RunConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "defaults::p_order")]
    pub p_order: usize,
    #[serde(default = "defaults::t_total")]
    pub t_total: usize,
    #[serde(default = "defaults::burn_in")]
    pub burn_in: usize,
    /// Identification-stage length in retained samples.
    #[serde(default = "defaults::t_star")]
    pub t_star: usize,
    /// Last retained sample consumed by the debias stage.
    #[serde(default = "defaults::t_end")]
    pub t_end: usize,
    /// Probability of zeroing each sampled AR tap.
    #[serde(default = "defaults::zero_prob")]
    pub zero_prob: f64,
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    /// Debias stop threshold on the tap residual norm; 0 runs the full tail.
    #[serde(default)]
    pub delta: f64,
    /// Support threshold relative to the max-abs entry.
    #[serde(default = "defaults::support_eps")]
    pub support_eps: f64,
    /// Score the diagonal in the support error rates. The first lag block
    /// always carries the zero-power tap on its diagonal, so excluding the
    /// diagonal scores topology rather than that tap.
    #[serde(default = "defaults::score_diagonal")]
    pub score_diagonal: bool,
    #[serde(default)]
    pub mask_mode: MaskModeConfig,
    /// Attractor denominator offset of the tap estimator.
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Use the λ-weighted recursive tap form instead of instantaneous LMS.
    #[serde(default)]
    pub recursive_h: bool,
    /// Pin the negative split parts at zero (adjacency shortcut).
    #[serde(default)]
    pub adjacency_only: bool,
    /// Optional steady-state stop rule for the identification stage.
    #[serde(default)]
    pub plateau_stop: bool,
    #[serde(default = "defaults::plateau_window")]
    pub plateau_window: usize,
    #[serde(default = "defaults::plateau_rel_tol")]
    pub plateau_rel_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("all model fields carry defaults")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskModeConfig {
    #[default]
    Reachability,
    Replicate,
}

impl From<MaskModeConfig> for MaskMode {
    fn from(m: MaskModeConfig) -> Self {
        match m {
            MaskModeConfig::Reachability => MaskMode::Reachability,
            MaskModeConfig::Replicate => MaskMode::ReplicateFirst,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HyperConfig {
    /// Per-lag L1 weights, non-increasing.
    pub mu: Vec<f64>,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// 1 = commutator in the Ŵ refinement, 2 = commutator in the Ψ step.
    #[serde(default = "defaults::path")]
    pub path: u8,
    /// Tap-estimator sparsity weight.
    #[serde(default = "defaults::eta")]
    pub eta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Mean prediction NMSE over the last quarter of the identification
    /// stage, averaged over trials.
    MinSteadySigma,
    /// Mean (false-alarm + miss) rate of the identified support.
    MinFaPlusMiss,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::base_seed")]
    pub base_seed: u64,
    #[serde(default = "defaults::objective")]
    pub objective: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

mod defaults {
    use super::Objective;
    pub fn p_order() -> usize {
        3
    }
    pub fn t_total() -> usize {
        1100
    }
    pub fn burn_in() -> usize {
        500
    }
    pub fn t_star() -> usize {
        400
    }
    pub fn t_end() -> usize {
        600
    }
    pub fn zero_prob() -> f64 {
        0.25
    }
    pub fn noise_std() -> f64 {
        1.0
    }
    pub fn support_eps() -> f64 {
        1e-6
    }
    pub fn score_diagonal() -> bool {
        true
    }
    pub fn epsilon() -> f64 {
        1e-2
    }
    pub fn plateau_window() -> usize {
        50
    }
    pub fn plateau_rel_tol() -> f64 {
        1e-3
    }
    pub fn gamma() -> f64 {
        0.5
    }
    pub fn lambda() -> f64 {
        0.9
    }
    pub fn path() -> u8 {
        1
    }
    pub fn eta() -> f64 {
        0.01
    }
    pub fn trials() -> usize {
        10
    }
    pub fn base_seed() -> u64 {
        42
    }
    pub fn objective() -> Objective {
        Objective::MinFaPlusMiss
    }
}

/// Arithmetic grid over a half-open interval `(lo, hi]`: the candidate
/// values are `lo + k·step` for `k >= 1` up to `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct GridRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        GridRange { lo, hi, step }
    }

    pub fn values(&self, coarsen: f64) -> Vec<f64> {
        let step = self.step * coarsen;
        let mut out = Vec::new();
        let mut k = 1u32;
        loop {
            let v = self.lo + step * f64::from(k);
            if v > self.hi + 1e-9 {
                break;
            }
            out.push(v);
            k += 1;
        }
        out
    }
}

impl TryFrom<[f64; 3]> for GridRange {
    type Error = String;

    fn try_from(v: [f64; 3]) -> std::result::Result<Self, String> {
        if !(v[2] > 0.0) {
            return Err(format!("grid step must be positive, got {}", v[2]));
        }
        if !(v[0] < v[1]) {
            return Err(format!("grid range [{}, {}] is empty", v[0], v[1]));
        }
        Ok(GridRange { lo: v[0], hi: v[1], step: v[2] })
    }
}

impl From<GridRange> for [f64; 3] {
    fn from(r: GridRange) -> Self {
        [r.lo, r.hi, r.step]
    }
}

/// Hyperparameter search grid. Candidate tuples with L1 weights that
/// increase in the lag are skipped, matching the weight-ordering invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// One range per lag.
    pub mu: Vec<GridRange>,
    pub eta: GridRange,
    pub gamma: GridRange,
    pub lambda: GridRange,
    /// Multiplies every step for desk-scale runs.
    #[serde(default = "one")]
    pub coarsen: f64,
}

fn one() -> f64 {
    1.0
}

/// One candidate hyperparameter tuple.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub mu: Vec<f64>,
    pub eta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl GridSpec {
    /// The reference protocol grid: L1 and attractor weights from (0,5]
    /// step 0.1, commutator weight from (0,2] step 0.1, forgetting factor
    /// from (0.8,0.99] step 0.01. Enormous; use `coarsen` or a sub-range
    /// for desk-scale runs.
    pub fn full(p_order: usize) -> Self {
        GridSpec {
            mu: vec![GridRange::new(0.0, 5.0, 0.1); p_order],
            eta: GridRange::new(0.0, 5.0, 0.1),
            gamma: GridRange::new(0.0, 2.0, 0.1),
            lambda: GridRange::new(0.8, 0.99, 0.01),
            coarsen: 1.0,
        }
    }

    /// The documented coarsened default: step 0.5 on the L1/attractor
    /// weights, 0.25 on the commutator weight, 0.05 on the forgetting
    /// factor, over the full reference intervals.
    pub fn coarsened_default(p_order: usize) -> Self {
        GridSpec {
            mu: vec![GridRange::new(0.0, 5.0, 0.5); p_order],
            eta: GridRange::new(0.0, 5.0, 0.5),
            gamma: GridRange::new(0.0, 2.0, 0.25),
            lambda: GridRange::new(0.8, 0.99, 0.05),
            coarsen: 1.0,
        }
    }

    pub fn validate(&self, p_order: usize) -> Result<()> {
        if self.mu.len() != p_order {
            return Err(GsoError::invalid(format!(
                "grid has {} L1 ranges but the model order is {p_order}",
                self.mu.len()
            )));
        }
        if !(self.coarsen >= 1.0) {
            return Err(GsoError::invalid("coarsen factor must be >= 1"));
        }
        let inside = |r: &GridRange, lo: f64, hi: f64, what: &str| {
            if r.lo < lo || r.hi > hi {
                Err(GsoError::invalid(format!(
                    "{what} range [{}, {}] outside ({lo}, {hi}]",
                    r.lo, r.hi
                )))
            } else {
                Ok(())
            }
        };
        for r in &self.mu {
            inside(r, 0.0, 5.0, "mu")?;
        }
        inside(&self.eta, 0.0, 5.0, "eta")?;
        inside(&self.gamma, 0.0, 2.0, "gamma")?;
        inside(&self.lambda, 0.8, 0.99, "lambda")?;
        Ok(())
    }

    /// Enumerate candidate tuples in lexicographic order of
    /// (mu_1, ..., mu_P, eta, gamma, lambda).
    pub fn points(&self, p_order: usize) -> Result<Vec<GridPoint>> {
        self.validate(p_order)?;
        let mu_axes: Vec<Vec<f64>> = self.mu.iter().map(|r| r.values(self.coarsen)).collect();
        let etas = self.eta.values(self.coarsen);
        let gammas = self.gamma.values(self.coarsen);
        let lambdas = self.lambda.values(self.coarsen);
        if mu_axes.iter().any(Vec::is_empty) || etas.is_empty() || gammas.is_empty() || lambdas.is_empty()
        {
            return Err(GsoError::invalid("grid axis has no candidate values"));
        }

        let mut mu_combos: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &mu_axes {
            let mut next = Vec::with_capacity(mu_combos.len() * axis.len());
            for combo in &mu_combos {
                for &v in axis {
                    // keep the non-increasing weight ordering
                    if combo.last().map_or(true, |last| v <= *last + 1e-12) {
                        let mut c = combo.clone();
                        c.push(v);
                        next.push(c);
                    }
                }
            }
            mu_combos = next;
        }

        let mut points =
            Vec::with_capacity(mu_combos.len() * etas.len() * gammas.len() * lambdas.len());
        for mu in &mu_combos {
            for &eta in &etas {
                for &gamma in &gammas {
                    for &lambda in &lambdas {
                        points.push(GridPoint { mu: mu.clone(), eta, gamma, lambda });
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(GsoError::invalid(
                "grid produced no candidate tuples (weight ordering filtered everything)",
            ));
        }
        Ok(points)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| GsoError::invalid(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        let m = &self.model;
        if m.p_order == 0 {
            return Err(GsoError::invalid("p_order must be positive"));
        }
        if m.t_total <= m.burn_in {
            return Err(GsoError::invalid("t_total must exceed burn_in"));
        }
        let retained = m.t_total - m.burn_in;
        if !(1 <= m.t_star && m.t_star < m.t_end && m.t_end <= retained) {
            return Err(GsoError::invalid(format!(
                "need 1 <= t_star < t_end <= retained samples, got t_star={}, t_end={}, retained={retained}",
                m.t_star, m.t_end
            )));
        }
        if !(0.0..=1.0).contains(&m.zero_prob) {
            return Err(GsoError::invalid("zero_prob must lie in [0,1]"));
        }
        if m.noise_std < 0.0 {
            return Err(GsoError::invalid("noise_std must be non-negative"));
        }
        if m.support_eps < 0.0 {
            return Err(GsoError::invalid("support_eps must be non-negative"));
        }
        if !(m.epsilon > 0.0) {
            return Err(GsoError::invalid("epsilon must be positive"));
        }
        if m.delta < 0.0 {
            return Err(GsoError::invalid("delta must be non-negative"));
        }
        if self.hyper.eta < 0.0 {
            return Err(GsoError::invalid("eta must be non-negative"));
        }
        self.hyper_params()?;
        if let Some(grid) = &self.grid {
            grid.validate(m.p_order)?;
        }
        if self.run.trials == 0 {
            return Err(GsoError::invalid("trials must be positive"));
        }
        Ok(())
    }

    pub fn alg_path(&self) -> Result<AlgPath> {
        match self.hyper.path {
            1 => Ok(AlgPath::One),
            2 => Ok(AlgPath::Two),
            other => Err(GsoError::invalid(format!("path must be 1 or 2, got {other}"))),
        }
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        if self.hyper.mu.len() != self.model.p_order {
            return Err(GsoError::invalid(format!(
                "hyper.mu has {} entries but the model order is {}",
                self.hyper.mu.len(),
                self.model.p_order
            )));
        }
        HyperParams::new(
            self.hyper.mu.clone(),
            self.hyper.gamma,
            self.hyper.lambda,
            self.alg_path()?,
        )
    }

    /// Clone of this config with the candidate tuple substituted in.
    pub fn with_point(&self, point: &GridPoint) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.hyper.mu = point.mu.clone();
        cfg.hyper.eta = point.eta;
        cfg.hyper.gamma = point.gamma;
        cfg.hyper.lambda = point.lambda;
        cfg.grid = None;
        cfg
    }
}

/// Per-trial seeds: `base_seed XOR splitmix64(trial_index)`. Stable across
/// versions; stage seeds inside a trial derive from these via
/// `RngSeed::derive`.
pub fn trial_seeds(base_seed: u64, trials: usize) -> Vec<RngSeed> {
    (0..trials as u64).map(|i| RngSeed::new(base_seed ^ splitmix64(i))).collect()
}
