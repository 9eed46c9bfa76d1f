//! Online support identification of the shift operator.
//!
//! One sample per step, the identifier maintains exponentially forgotten
//! correlations
//!
//! ```text
//! R_t = λ R_{t-1} + x_{P,t} x_{P,t}ᵀ        (stacked-lag autocorrelation)
//! P_t = λ P_{t-1} + x_t x_{P,t}ᵀ            (signal/lag cross-correlation)
//! ```
//!
//! and walks the regularized least-squares objective
//!
//! ```text
//! J(Ψ) = ½ Σ_τ λ^{t-τ} ‖x_τ − Ψ x_{P,τ}‖²
//!        + Σ_p μ_{p,t} ‖vec(Ψ_p)‖₁  +  (γ/2) Σ_{i<j} ‖[Ψ_i, Ψ_j]‖²_F
//! ```
//!
//! with a projected gradient step in the split variables Ψ = Ψ₊ − Ψ₋,
//! Ψ₊, Ψ₋ ≥ 0. The split linearizes the L1 term, and clamping to the
//! non-negative orthant zeroes entries whose data evidence stays below the
//! adaptive L1 weight — sparsity falls out of the projection.
//!
//! Two variants are supported for the shift-operator estimate itself:
//! `Path::One` runs a second proximal iteration pulling Ŵ toward the first
//! lag block under an L1 penalty and a commutator penalty against the higher
//! blocks; `Path::Two` instead puts the commutator penalty into the Ψ
//! sub-problem and reads off Ŵ = Ψ̂₁ directly.

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{GsoError, Result};
use crate::graph::{GsoMatrix, TopologyKind};
use crate::metrics::{nmse_gso, nmse_signal, PhaseTrace};
use crate::sim::SignalStream;

/// Which sub-problem carries the commutator penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    /// Commutator enforced while refining Ŵ from Ψ̂₁ (separate W iteration).
    One,
    /// Commutator enforced in the Ψ sub-problem; Ŵ_t ≡ Ψ̂_{1,t}.
    Two,
}

/// Manually tuned constants of the identification objective.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Per-lag L1 weights, non-increasing in the lag (later blocks are
    /// denser polynomials and must not be over-penalized).
    pub mu: Vec<f64>,
    /// Commutator penalty weight.
    pub gamma: f64,
    /// Forgetting factor in (0, 1].
    pub lambda: f64,
    pub path: Path,
}

impl HyperParams {
    pub fn new(mu: Vec<f64>, gamma: f64, lambda: f64, path: Path) -> Result<Self> {
        let hp = HyperParams { mu, gamma, lambda, path };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(GsoError::invalid("need one L1 weight per lag"));
        }
        if self.mu.iter().any(|m| *m < 0.0) {
            return Err(GsoError::invalid("L1 weights must be non-negative"));
        }
        if self.mu.windows(2).any(|w| w[1] > w[0]) {
            return Err(GsoError::invalid("L1 weights must be non-increasing in the lag"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(GsoError::invalid("forgetting factor must lie in (0,1]"));
        }
        if self.gamma < 0.0 {
            return Err(GsoError::invalid("commutator weight must be non-negative"));
        }
        Ok(())
    }

    pub fn p_order(&self) -> usize {
        self.mu.len()
    }
}

/// Initial trial stepsize policy for the backtracking line search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaInit {
    /// `1 / (trace(R_t)/P + eps)`, an inverse-curvature guess from the data.
    InverseTrace { eps: f64 },
    /// A constant trial step; with `max_backtracks = 0` this becomes a plain
    /// fixed-step update (used by oracle tests).
    Fixed(f64),
}

/// Armijo backtracking controller shared by all three stepsize families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsizeController {
    /// Sufficient-decrease constant c in (0,1).
    pub sufficient_decrease: f64,
    /// Multiplicative backtracking ratio in (0,1).
    pub shrink: f64,
    pub alpha_init: AlphaInit,
    /// Candidate evaluations before giving up; 0 means "no search, take the
    /// initial step unconditionally".
    pub max_backtracks: u32,
    /// Stepsize applied when the search exhausts its budget; the stream is
    /// never aborted, a diagnostics counter is incremented instead.
    pub floor: f64,
}

impl Default for StepsizeController {
    fn default() -> Self {
        StepsizeController {
            sufficient_decrease: 1e-4,
            shrink: 0.5,
            alpha_init: AlphaInit::InverseTrace { eps: 1e-8 },
            max_backtracks: 30,
            floor: 1e-8,
        }
    }
}

impl StepsizeController {
    pub fn fixed(alpha: f64) -> Self {
        StepsizeController {
            alpha_init: AlphaInit::Fixed(alpha),
            max_backtracks: 0,
            ..StepsizeController::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(GsoError::invalid("sufficient-decrease constant must be in (0,1)"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(GsoError::invalid("backtracking ratio must be in (0,1)"));
        }
        if !(self.floor > 0.0) {
            return Err(GsoError::invalid("stepsize floor must be positive"));
        }
        Ok(())
    }
}

/// One line-search outcome; `accepted` is false when the search fell back to
/// the floor stepsize.
#[derive(Clone, Copy, Debug)]
pub struct ArmijoOutcome {
    pub step: f64,
    pub accepted: bool,
    pub f_before: f64,
    pub f_after: f64,
    pub grad_sq: f64,
}

/// Per-sample diagnostics emitted by [`Identifier::ingest`].
#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    /// One-step prediction NMSE against the pre-update estimate; `None` on a
    /// zero sample.
    pub sigma: Option<f64>,
    pub psi_steps: Vec<ArmijoOutcome>,
    pub w_step: Option<ArmijoOutcome>,
}

/// Every recursively maintained quantity of the identification stage.
#[derive(Clone, Debug)]
pub struct IdentifierState {
    /// Samples ingested so far.
    pub t: usize,
    pub n: usize,
    pub p_order: usize,
    /// Non-negative split parts of Ψ̂ (N × NP).
    pub psi_plus: Array2<f64>,
    pub psi_minus: Array2<f64>,
    /// Non-negative split parts of Ŵ (N × N).
    pub w_plus: Array2<f64>,
    pub w_minus: Array2<f64>,
    /// λ-weighted stacked-lag autocorrelation (NP × NP), symmetric PSD.
    pub lag_autocorr: Array2<f64>,
    /// λ-weighted signal/lag cross-correlation (N × NP).
    pub cross_corr: Array2<f64>,
    /// Commutator-penalty gradient blocks for the Ψ sub-problem (N × NP).
    pub commutator_grad_psi: Array2<f64>,
    /// Commutator-penalty gradient for the Ŵ sub-problem (N × N).
    pub commutator_grad_w: Array2<f64>,
    /// λ-weighted running signal energy, the constant completing the
    /// quadratic data objective.
    pub weighted_energy: f64,
    /// Objective value at the top of the latest step.
    pub last_objective: f64,
    /// How often a line search exhausted its budget and took the floor step.
    pub armijo_floor_hits: u64,
    /// The last `p_order` samples, newest first.
    pub(crate) buffer: VecDeque<Array1<f64>>,
}

impl IdentifierState {
    pub fn zeros(n: usize, p_order: usize) -> Self {
        IdentifierState {
            t: 0,
            n,
            p_order,
            psi_plus: Array2::zeros((n, n * p_order)),
            psi_minus: Array2::zeros((n, n * p_order)),
            w_plus: Array2::zeros((n, n)),
            w_minus: Array2::zeros((n, n)),
            lag_autocorr: Array2::zeros((n * p_order, n * p_order)),
            cross_corr: Array2::zeros((n, n * p_order)),
            commutator_grad_psi: Array2::zeros((n, n * p_order)),
            commutator_grad_w: Array2::zeros((n, n)),
            weighted_energy: 0.0,
            last_objective: 0.0,
            armijo_floor_hits: 0,
            buffer: VecDeque::with_capacity(p_order),
        }
    }

    /// Stack the buffered lags newest-first, zero-filling the missing past.
    pub fn stacked_lags(&self) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.n * self.p_order);
        for (k, x) in self.buffer.iter().enumerate() {
            out.slice_mut(s![k * self.n..(k + 1) * self.n]).assign(x);
        }
        out
    }

    pub(crate) fn push_sample(&mut self, x: Array1<f64>) {
        self.buffer.push_front(x);
        self.buffer.truncate(self.p_order);
    }

    pub fn buffered_lags(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.buffer.iter()
    }

    pub(crate) fn set_buffer(&mut self, lags_newest_first: Vec<Array1<f64>>) {
        self.buffer = lags_newest_first.into();
    }
}

/// View of the p-th (0-based) N×N block of an N×NP stack.
pub fn psi_block(psi: &Array2<f64>, n: usize, p: usize) -> ArrayView2<'_, f64> {
    psi.slice(s![.., p * n..(p + 1) * n])
}

/// ½(⟨Ψ, ΨR⟩ − 2⟨P, Ψ⟩ + c): the λ-weighted residual sum expressed through
/// the running correlations.
pub fn data_objective(psi: &Array2<f64>, r: &Array2<f64>, p_corr: &Array2<f64>, energy: f64) -> f64 {
    let pr = psi.dot(r);
    let quad: f64 = psi.iter().zip(pr.iter()).map(|(a, b)| a * b).sum();
    let cross: f64 = psi.iter().zip(p_corr.iter()).map(|(a, b)| a * b).sum();
    0.5 * (quad - 2.0 * cross + energy)
}

/// Gradient of the data objective: ΨR − P.
pub fn data_gradient(psi: &Array2<f64>, r: &Array2<f64>, p_corr: &Array2<f64>) -> Array2<f64> {
    psi.dot(r) - p_corr
}

/// Σ_{i<j} ‖[Ψ_i, Ψ_j]‖²_F over the lag blocks.
pub fn commutator_penalty(psi: &Array2<f64>, n: usize, p_order: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..p_order {
        let bi = psi_block(psi, n, i);
        for j in (i + 1)..p_order {
            let bj = psi_block(psi, n, j);
            let c = bi.dot(&bj) - bj.dot(&bi);
            total += c.iter().map(|v| v * v).sum::<f64>();
        }
    }
    total
}

/// Block-stacked gradient of ½·Σ_{i<j}‖[Ψ_i,Ψ_j]‖²_F:
/// block p is Σ_{k≠p} ([Ψ_p,Ψ_k]Ψ_kᵀ − Ψ_kᵀ[Ψ_p,Ψ_k]).
pub fn commutator_penalty_grad(psi: &Array2<f64>, n: usize, p_order: usize) -> Array2<f64> {
    let mut grad = Array2::<f64>::zeros((n, n * p_order));
    for p in 0..p_order {
        let bp = psi_block(psi, n, p);
        let mut acc = Array2::<f64>::zeros((n, n));
        for k in 0..p_order {
            if k == p {
                continue;
            }
            let bk = psi_block(psi, n, k);
            let c = bp.dot(&bk) - bk.dot(&bp);
            acc = acc + c.dot(&bk.t()) - bk.t().dot(&c);
        }
        grad.slice_mut(s![.., p * n..(p + 1) * n]).assign(&acc);
    }
    grad
}

/// Full split objective of the Ψ sub-problem. `gamma_pen` is the commutator
/// weight actually active in this sub-problem (zero under `Path::One`).
#[allow(clippy::too_many_arguments)]
fn psi_split_objective(
    plus: &Array2<f64>,
    minus: &Array2<f64>,
    r: &Array2<f64>,
    p_corr: &Array2<f64>,
    energy: f64,
    mu_t: &[f64],
    gamma_pen: f64,
    n: usize,
    p_order: usize,
) -> f64 {
    let psi = plus - minus;
    let mut f = data_objective(&psi, r, p_corr, energy);
    for (p, mu) in mu_t.iter().enumerate() {
        if *mu != 0.0 {
            let sp: f64 = psi_block(plus, n, p).iter().sum();
            let sm: f64 = psi_block(minus, n, p).iter().sum();
            f += mu * (sp + sm);
        }
    }
    if gamma_pen != 0.0 {
        f += 0.5 * gamma_pen * commutator_penalty(&psi, n, p_order);
    }
    f
}

/// Split objective of the Ŵ sub-problem (`Path::One` refinement).
fn w_split_objective(
    w_plus: &Array2<f64>,
    w_minus: &Array2<f64>,
    psi1: &Array2<f64>,
    psi_t: &Array2<f64>,
    mu1: f64,
    gamma: f64,
    n: usize,
    p_order: usize,
) -> f64 {
    let w = w_plus - w_minus;
    let diff = psi1 - &w;
    let mut f = 0.5 * diff.iter().map(|v| v * v).sum::<f64>();
    f += mu1 * (w_plus.iter().sum::<f64>() + w_minus.iter().sum::<f64>());
    if gamma != 0.0 {
        for k in 1..p_order {
            let bk = psi_block(psi_t, n, k);
            let c = w.dot(&bk) - bk.dot(&w);
            f += 0.5 * gamma * c.iter().map(|v| v * v).sum::<f64>();
        }
    }
    f
}

/// Backtracking line search with sufficient decrease
/// `f(α) ≤ f_old − c·α·grad_sq`. With `max_backtracks == 0` the initial step
/// is taken unconditionally. Exhaustion falls back to the floor step and is
/// reported through `accepted = false`.
pub(crate) fn armijo_search(
    sc: &StepsizeController,
    init: f64,
    f_old: f64,
    grad_sq: f64,
    mut eval: impl FnMut(f64) -> f64,
) -> ArmijoOutcome {
    if sc.max_backtracks == 0 {
        let f_after = eval(init);
        return ArmijoOutcome { step: init, accepted: true, f_before: f_old, f_after, grad_sq };
    }
    let mut alpha = init;
    for _ in 0..sc.max_backtracks {
        let f_after = eval(alpha);
        if f_after <= f_old - sc.sufficient_decrease * alpha * grad_sq {
            return ArmijoOutcome { step: alpha, accepted: true, f_before: f_old, f_after, grad_sq };
        }
        alpha *= sc.shrink;
    }
    let f_after = eval(sc.floor);
    ArmijoOutcome { step: sc.floor, accepted: false, f_before: f_old, f_after, grad_sq }
}

/// Clamped split step for one block: `(base − α·dir)₊`.
fn stepped_block(base: ArrayView2<f64>, dir: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let mut out = base.to_owned();
    out.zip_mut_with(dir, |b, d| *b = (*b - alpha * d).max(0.0));
    out
}

/// The online identification state machine. Single writer: exactly one
/// logical thread advances a given instance; distinct trials run
/// concurrently with independent instances.
#[derive(Clone, Debug)]
pub struct Identifier {
    state: IdentifierState,
    hp: HyperParams,
    sc: StepsizeController,
    /// Adjacency shortcut: keep the negative split parts pinned at zero.
    adjacency_only: bool,
}

impl Identifier {
    pub fn new(
        n: usize,
        hp: HyperParams,
        sc: StepsizeController,
        adjacency_only: bool,
    ) -> Result<Self> {
        hp.validate()?;
        sc.validate()?;
        if n == 0 {
            return Err(GsoError::invalid("dimension must be positive"));
        }
        Ok(Self::with_params_unchecked(n, hp, sc, adjacency_only))
    }

    fn with_params_unchecked(n: usize, hp: HyperParams, sc: StepsizeController, adjacency_only: bool) -> Self {
        let p_order = hp.p_order();
        Identifier { state: IdentifierState::zeros(n, p_order), hp, sc, adjacency_only }
    }

    /// Rebuild an identifier from checkpointed state.
    pub fn resume(
        state: IdentifierState,
        hp: HyperParams,
        sc: StepsizeController,
        adjacency_only: bool,
    ) -> Result<Self> {
        hp.validate()?;
        sc.validate()?;
        if hp.p_order() != state.p_order {
            return Err(GsoError::invalid(format!(
                "hyperparameters cover {} lags but the state holds {}",
                hp.p_order(),
                state.p_order
            )));
        }
        Ok(Identifier { state, hp, sc, adjacency_only })
    }

    pub fn state(&self) -> &IdentifierState {
        &self.state
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hp
    }

    pub fn stepsizes(&self) -> &StepsizeController {
        &self.sc
    }

    pub fn adjacency_only(&self) -> bool {
        self.adjacency_only
    }

    /// Current Ψ̂ = Ψ̂₊ − Ψ̂₋.
    pub fn psi_hat(&self) -> Array2<f64> {
        &self.state.psi_plus - &self.state.psi_minus
    }

    /// Current Ŵ = Ŵ₊ − Ŵ₋.
    pub fn w_hat(&self) -> Array2<f64> {
        &self.state.w_plus - &self.state.w_minus
    }

    pub fn w_estimate(&self) -> GsoMatrix {
        GsoMatrix::new(self.w_hat(), TopologyKind::Estimated)
            .expect("state matrices are square by construction")
    }

    /// Adaptive per-lag L1 weights `μ_p · ‖P_{p,t} − γ Q_{p,t}‖_∞`
    /// (entrywise max-abs norm).
    pub fn adaptive_mu(&self) -> Vec<f64> {
        let n = self.state.n;
        (0..self.state.p_order)
            .map(|p| {
                let pc = psi_block(&self.state.cross_corr, n, p);
                let q = psi_block(&self.state.commutator_grad_psi, n, p);
                let scale = pc
                    .iter()
                    .zip(q.iter())
                    .fold(0.0_f64, |m, (a, b)| m.max((a - self.hp.gamma * b).abs()));
                self.hp.mu[p] * scale
            })
            .collect()
    }

    /// Advance the recursions by one sample: correlation updates, the split
    /// projected-gradient step on Ψ̂, and the path-dependent Ŵ step.
    pub fn ingest(&mut self, x_t: ArrayView1<f64>) -> Result<StepDiagnostics> {
        let n = self.state.n;
        if x_t.len() != n {
            return Err(GsoError::invalid(format!(
                "sample dimension {} does not match identifier dimension {n}",
                x_t.len()
            )));
        }

        let lags = self.state.stacked_lags();
        // prediction residual against the pre-update estimate
        let psi_prev = self.psi_hat();
        let residual = &x_t - &psi_prev.dot(&lags);
        let sigma = nmse_signal(residual.view(), x_t);

        self.update_correlations(x_t, &lags);

        self.state.commutator_grad_psi = match self.hp.path {
            Path::One => Array2::zeros((n, n * self.state.p_order)),
            Path::Two => commutator_penalty_grad(&psi_prev, n, self.state.p_order),
        };

        let mu_t = self.adaptive_mu();
        let grad = &psi_prev.dot(&self.state.lag_autocorr)
            - &(&self.state.cross_corr - &(&self.state.commutator_grad_psi * self.hp.gamma));

        let psi_steps = self.step_psi(&grad, &mu_t);
        let w_step = self.step_w(&mu_t);

        self.state.push_sample(x_t.to_owned());
        Ok(StepDiagnostics { sigma, psi_steps, w_step })
    }

    /// λ-decay plus rank-one updates of R, P and the energy constant.
    fn update_correlations(&mut self, x_t: ArrayView1<f64>, lags: &Array1<f64>) {
        let lam = self.hp.lambda;
        let np = self.state.n * self.state.p_order;
        self.state.lag_autocorr.mapv_inplace(|v| v * lam);
        self.state.cross_corr.mapv_inplace(|v| v * lam);
        for i in 0..np {
            if lags[i] == 0.0 {
                continue;
            }
            for j in 0..np {
                self.state.lag_autocorr[[i, j]] += lags[i] * lags[j];
            }
        }
        for i in 0..self.state.n {
            if x_t[i] == 0.0 {
                continue;
            }
            for j in 0..np {
                self.state.cross_corr[[i, j]] += x_t[i] * lags[j];
            }
        }
        self.state.weighted_energy = lam * self.state.weighted_energy + x_t.dot(&x_t);
        self.state.t += 1;
    }

    fn psi_alpha_init(&self) -> f64 {
        match self.sc.alpha_init {
            AlphaInit::Fixed(a) => a,
            AlphaInit::InverseTrace { eps } => {
                let tr = self.state.lag_autocorr.diag().sum();
                1.0 / (tr / self.state.p_order as f64 + eps)
            }
        }
    }

    /// Per-lag projected gradient steps with an Armijo-chosen diagonal
    /// stepsize; every lag's search is evaluated against the common
    /// pre-update state, then all blocks move simultaneously.
    fn step_psi(&mut self, grad: &Array2<f64>, mu_t: &[f64]) -> Vec<ArmijoOutcome> {
        let n = self.state.n;
        let p_order = self.state.p_order;
        let gamma_pen = match self.hp.path {
            Path::One => 0.0,
            Path::Two => self.hp.gamma,
        };
        let f_old = psi_split_objective(
            &self.state.psi_plus,
            &self.state.psi_minus,
            &self.state.lag_autocorr,
            &self.state.cross_corr,
            self.state.weighted_energy,
            mu_t,
            gamma_pen,
            n,
            p_order,
        );
        self.state.last_objective = f_old;
        let alpha_init = self.psi_alpha_init();

        let mut next_plus = self.state.psi_plus.clone();
        let mut next_minus = self.state.psi_minus.clone();
        let mut outcomes = Vec::with_capacity(p_order);
        for p in 0..p_order {
            let g_block = psi_block(grad, n, p).to_owned();
            let dir_plus = &g_block + mu_t[p];
            let dir_minus = &g_block.mapv(|v| -v) + mu_t[p];
            let grad_sq = dir_plus.iter().map(|v| v * v).sum::<f64>()
                + if self.adjacency_only { 0.0 } else { dir_minus.iter().map(|v| v * v).sum::<f64>() };

            let state = &self.state;
            let adjacency_only = self.adjacency_only;
            let eval = |alpha: f64| {
                let mut cand_plus = state.psi_plus.clone();
                cand_plus
                    .slice_mut(s![.., p * n..(p + 1) * n])
                    .assign(&stepped_block(psi_block(&state.psi_plus, n, p), &dir_plus, alpha));
                let mut cand_minus = state.psi_minus.clone();
                if !adjacency_only {
                    cand_minus
                        .slice_mut(s![.., p * n..(p + 1) * n])
                        .assign(&stepped_block(psi_block(&state.psi_minus, n, p), &dir_minus, alpha));
                }
                psi_split_objective(
                    &cand_plus,
                    &cand_minus,
                    &state.lag_autocorr,
                    &state.cross_corr,
                    state.weighted_energy,
                    mu_t,
                    gamma_pen,
                    n,
                    p_order,
                )
            };
            let outcome = armijo_search(&self.sc, alpha_init, f_old, grad_sq, eval);
            if !outcome.accepted {
                self.state.armijo_floor_hits += 1;
            }

            next_plus
                .slice_mut(s![.., p * n..(p + 1) * n])
                .assign(&stepped_block(psi_block(&self.state.psi_plus, n, p), &dir_plus, outcome.step));
            if !self.adjacency_only {
                next_minus
                    .slice_mut(s![.., p * n..(p + 1) * n])
                    .assign(&stepped_block(psi_block(&self.state.psi_minus, n, p), &dir_minus, outcome.step));
            }
            outcomes.push(outcome);
        }
        self.state.psi_plus = next_plus;
        self.state.psi_minus = next_minus;
        outcomes
    }

    /// Path 2 copies the first lag block; Path 1 runs the proximal
    /// refinement with its own Armijo-chosen scalar stepsize.
    fn step_w(&mut self, mu_t: &[f64]) -> Option<ArmijoOutcome> {
        let n = self.state.n;
        let p_order = self.state.p_order;
        match self.hp.path {
            Path::Two => {
                self.state.w_plus = psi_block(&self.state.psi_plus, n, 0).to_owned();
                self.state.w_minus = psi_block(&self.state.psi_minus, n, 0).to_owned();
                None
            }
            Path::One => {
                let psi_t = self.psi_hat();
                let psi1 = psi_block(&psi_t, n, 0).to_owned();
                let w_prev = self.w_hat();
                let mut s_mat = Array2::<f64>::zeros((n, n));
                if self.hp.gamma != 0.0 {
                    for k in 1..p_order {
                        let bk = psi_block(&psi_t, n, k);
                        let c = w_prev.dot(&bk) - bk.dot(&w_prev);
                        s_mat = s_mat + c.dot(&bk.t()) - bk.t().dot(&c);
                    }
                }
                let v = &w_prev - &(&psi1 - &(&s_mat * self.hp.gamma));
                let mu1 = mu_t[0];
                let f_old = w_split_objective(
                    &self.state.w_plus,
                    &self.state.w_minus,
                    &psi1,
                    &psi_t,
                    mu1,
                    self.hp.gamma,
                    n,
                    p_order,
                );
                let dir_plus = &v + mu1;
                let dir_minus = &v.mapv(|x| -x) + mu1;
                let grad_sq = dir_plus.iter().map(|x| x * x).sum::<f64>()
                    + if self.adjacency_only { 0.0 } else { dir_minus.iter().map(|x| x * x).sum::<f64>() };
                let beta_init = match self.sc.alpha_init {
                    AlphaInit::Fixed(a) => a,
                    // the ½‖Ψ₁ − W‖² term has unit curvature
                    AlphaInit::InverseTrace { .. } => 1.0,
                };

                let state = &self.state;
                let adjacency_only = self.adjacency_only;
                let gamma = self.hp.gamma;
                let eval = |beta: f64| {
                    let cand_plus = stepped_block(state.w_plus.view(), &dir_plus, beta);
                    let cand_minus = if adjacency_only {
                        state.w_minus.clone()
                    } else {
                        stepped_block(state.w_minus.view(), &dir_minus, beta)
                    };
                    w_split_objective(&cand_plus, &cand_minus, &psi1, &psi_t, mu1, gamma, n, p_order)
                };
                let outcome = armijo_search(&self.sc, beta_init, f_old, grad_sq, eval);
                if !outcome.accepted {
                    self.state.armijo_floor_hits += 1;
                }
                self.state.w_plus = stepped_block(self.state.w_plus.view(), &dir_plus, outcome.step);
                if !self.adjacency_only {
                    self.state.w_minus = stepped_block(self.state.w_minus.view(), &dir_minus, outcome.step);
                }
                self.state.commutator_grad_w = s_mat;
                Some(outcome)
            }
        }
    }
}

/// Optional steady-state stop rule: halt once the windowed mean of the
/// prediction NMSE stops moving by more than `rel_tol` relatively.
#[derive(Clone, Copy, Debug)]
pub struct PlateauRule {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for PlateauRule {
    fn default() -> Self {
        PlateauRule { window: 50, rel_tol: 1e-3 }
    }
}

fn plateau_reached(sigma: &[f64], rule: &PlateauRule) -> bool {
    if rule.window == 0 || sigma.len() < 2 * rule.window {
        return false;
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let recent = mean(&sigma[sigma.len() - rule.window..]);
    let previous = mean(&sigma[sigma.len() - 2 * rule.window..sigma.len() - rule.window]);
    if !recent.is_finite() || !previous.is_finite() {
        return false;
    }
    (recent - previous).abs() <= rule.rel_tol * previous.abs().max(1e-12)
}

/// Result of running the identification stage over a stream prefix.
#[derive(Clone, Debug)]
pub struct IdentifyOutcome {
    pub identifier: Identifier,
    /// The support-defining estimate Ŵ* at the stop time.
    pub w_star: GsoMatrix,
    pub trace: PhaseTrace,
}

/// Run the identification stage over `stream[1..=t_star]`, optionally
/// recording the operator NMSE against a known truth and stopping early at a
/// σ plateau.
pub fn identify_stream(
    stream: &SignalStream,
    t_star: usize,
    hp: HyperParams,
    sc: StepsizeController,
    adjacency_only: bool,
    w_true: Option<&GsoMatrix>,
    plateau: Option<PlateauRule>,
) -> Result<IdentifyOutcome> {
    if t_star == 0 || t_star > stream.len() {
        return Err(GsoError::invalid(format!(
            "t_star={t_star} outside 1..={}",
            stream.len()
        )));
    }
    let mut identifier = Identifier::new(stream.n(), hp, sc, adjacency_only)?;
    let mut trace = PhaseTrace::new(1);
    for t in 1..=t_star {
        let diag = identifier.ingest(stream.samples()[t - 1].view())?;
        let w_est = identifier.w_estimate();
        let zeta = match w_true {
            Some(truth) => Some(nmse_gso(truth, &w_est)?),
            None => None,
        };
        trace.push(diag.sigma, zeta, w_est.nnz());
        if let Some(rule) = &plateau {
            if plateau_reached(&trace.sigma, rule) {
                break;
            }
        }
    }
    let w_star = identifier.w_estimate();
    Ok(IdentifyOutcome { identifier, w_star, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{lag_stack, SignalStream};
    use crate::topology::TopologySpec;
    use ndarray::array;

    fn hp(mu: Vec<f64>, gamma: f64, lambda: f64, path: Path) -> HyperParams {
        HyperParams { mu, gamma, lambda, path }
    }

    fn random_stream(n: usize, len: usize, seed: u64) -> SignalStream {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Array1<f64>> = (0..len)
            .map(|_| Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        SignalStream::new(samples.clone(), samples, 0).unwrap()
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::new(vec![0.5, 0.3], 0.1, 0.95, Path::One).is_ok());
        assert!(HyperParams::new(vec![0.3, 0.5], 0.1, 0.95, Path::One).is_err());
        assert!(HyperParams::new(vec![0.5], -0.1, 0.95, Path::One).is_err());
        assert!(HyperParams::new(vec![0.5], 0.0, 0.0, Path::One).is_err());
        assert!(HyperParams::new(vec![0.5], 0.0, 1.2, Path::One).is_err());
        assert!(HyperParams::new(vec![], 0.0, 1.0, Path::One).is_err());
    }

    #[test]
    fn first_step_zero_history_gives_zero_correlations() {
        let mut id = Identifier::new(
            2,
            hp(vec![0.5], 0.0, 0.95, Path::One),
            StepsizeController::default(),
            false,
        )
        .unwrap();
        id.ingest(array![1.0, -2.0].view()).unwrap();
        assert_eq!(id.state().lag_autocorr, Array2::zeros((2, 2)));
        assert_eq!(id.state().cross_corr, Array2::zeros((2, 2)));
        assert_eq!(id.state().t, 1);
    }

    #[test]
    fn lambda_zero_keeps_only_current_outer_product() {
        // λ=0 bypasses the public validation on purpose: the recursion then
        // holds the instantaneous outer product only.
        let mut id = Identifier::with_params_unchecked(
            2,
            hp(vec![0.0], 0.0, 0.0, Path::One),
            StepsizeController::fixed(0.0),
            false,
        );
        let xs = [array![1.0, 2.0], array![3.0, -1.0], array![0.5, 0.25]];
        for x in &xs {
            id.ingest(x.view()).unwrap();
        }
        // x_{P,t} at the last step is the second-to-last sample
        let lags = array![3.0, -1.0];
        for i in 0..2 {
            for j in 0..2 {
                assert!((id.state().lag_autocorr[[i, j]] - lags[i] * lags[j]).abs() < 1e-15);
                assert!((id.state().cross_corr[[i, j]] - xs[2][i] * lags[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlations_match_batch_sums() {
        // recursive R_t and P_t equal the λ-weighted definitional sums
        for lambda in [1.0, 0.9] {
            let stream = random_stream(3, 50, 17);
            let p_order = 2;
            let mut id = Identifier::new(
                3,
                hp(vec![0.0, 0.0], 0.0, lambda, Path::One),
                StepsizeController::fixed(0.0),
                false,
            )
            .unwrap();
            for x in stream.samples() {
                id.ingest(x.view()).unwrap();
            }
            let t = stream.len();
            let np = 3 * p_order;
            let mut r_batch = Array2::<f64>::zeros((np, np));
            let mut p_batch = Array2::<f64>::zeros((3, np));
            for tau in 1..=t {
                let lags = lag_stack(&stream, tau, p_order);
                let weight = lambda.powi((t - tau) as i32);
                for i in 0..np {
                    for j in 0..np {
                        r_batch[[i, j]] += weight * lags[i] * lags[j];
                    }
                }
                for i in 0..3 {
                    for j in 0..np {
                        p_batch[[i, j]] += weight * stream.samples()[tau - 1][i] * lags[j];
                    }
                }
            }
            let scale = r_batch.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let r_err = (&id.state().lag_autocorr - &r_batch)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            let p_err = (&id.state().cross_corr - &p_batch)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(r_err <= 1e-10 * scale, "lambda={lambda}: R err {r_err}");
            assert!(p_err <= 1e-10 * scale, "lambda={lambda}: P err {p_err}");
        }
    }

    #[test]
    fn commutator_grad_zero_for_equal_or_zero_blocks() {
        let n = 3;
        let p_order = 3;
        let zero = Array2::<f64>::zeros((n, n * p_order));
        assert_eq!(commutator_penalty_grad(&zero, n, p_order), zero);

        let mut equal = Array2::<f64>::zeros((n, n * p_order));
        let block = array![[0.1, 0.2, 0.0], [0.0, -0.4, 0.3], [0.5, 0.0, 0.0]];
        for p in 0..p_order {
            equal.slice_mut(s![.., p * n..(p + 1) * n]).assign(&block);
        }
        let grad = commutator_penalty_grad(&equal, n, p_order);
        assert!(grad.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn commutator_grad_matches_finite_differences() {
        // frozen example case plus the FD cross-check
        let n = 2;
        let p_order = 2;
        let mut psi = Array2::<f64>::zeros((n, n * p_order));
        psi.slice_mut(s![.., 0..2]).assign(&array![[0.0, 1.0], [0.0, 0.0]]);
        psi.slice_mut(s![.., 2..4]).assign(&array![[0.0, 0.0], [1.0, 0.0]]);
        let analytic = commutator_penalty_grad(&psi, n, p_order);
        let h = 1e-6;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..(n * p_order) {
                let mut plus = psi.clone();
                plus[[i, j]] += h;
                let mut minus = psi.clone();
                minus[[i, j]] -= h;
                let fd = (0.5 * commutator_penalty(&plus, n, p_order)
                    - 0.5 * commutator_penalty(&minus, n, p_order))
                    / (2.0 * h);
                worst = worst.max((fd - analytic[[i, j]]).abs());
            }
        }
        let scale = analytic.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        assert!(worst / scale < 1e-5, "relative FD error {}", worst / scale);
    }

    #[test]
    fn step_psi_scalar_oracle() {
        // hand arithmetic: G = 0.5·2 − 1.6 = −0.6, α = 0.1
        let mut id = Identifier::new(
            1,
            hp(vec![0.0], 0.0, 1.0, Path::One),
            StepsizeController::fixed(0.1),
            false,
        )
        .unwrap();
        id.state.psi_plus = array![[0.5]];
        id.state.lag_autocorr = array![[2.0]];
        id.state.cross_corr = array![[1.6]];
        let grad = data_gradient(&id.psi_hat(), &id.state.lag_autocorr, &id.state.cross_corr);
        assert!((grad[[0, 0]] + 0.6).abs() < 1e-15);
        id.step_psi(&grad, &[0.0]);
        assert!((id.state.psi_plus[[0, 0]] - 0.56).abs() < 1e-15);
        assert_eq!(id.state.psi_minus[[0, 0]], 0.0);
        assert!((id.psi_hat()[[0, 0]] - 0.56).abs() < 1e-15);
    }

    #[test]
    fn step_psi_zero_gradient_is_fixed_point() {
        let mut id = Identifier::new(
            2,
            hp(vec![0.0], 0.0, 1.0, Path::One),
            StepsizeController::fixed(0.3),
            false,
        )
        .unwrap();
        id.state.psi_plus = array![[0.4, 0.0], [0.1, 0.2]];
        id.state.lag_autocorr = Array2::eye(2);
        id.state.cross_corr = id.psi_hat();
        let grad = data_gradient(&id.psi_hat(), &id.state.lag_autocorr, &id.state.cross_corr);
        let before = id.psi_hat();
        id.step_psi(&grad, &[0.0]);
        assert_eq!(id.psi_hat(), before);
    }

    #[test]
    fn step_psi_projection_clamps_both_directions() {
        // from zero state, descent directions pointing out of the orthant
        // leave everything at zero
        let mut id = Identifier::new(
            1,
            hp(vec![1.0], 0.0, 1.0, Path::One),
            StepsizeController::fixed(0.5),
            false,
        )
        .unwrap();
        let grad = array![[0.5]]; // |G| <= mu, so M+G and M−G are both >= 0
        id.step_psi(&grad, &[1.0]);
        assert_eq!(id.psi_hat()[[0, 0]], 0.0);
        assert_eq!(id.state.psi_plus[[0, 0]], 0.0);
        assert_eq!(id.state.psi_minus[[0, 0]], 0.0);
    }

    #[test]
    fn step_w_scalar_oracle_path_one() {
        // V = 0.3 − 0.5 = −0.2; Ŵ₊ = (0.3 − 0.5(0.01 − 0.2))₊ = 0.395
        let mut id = Identifier::new(
            1,
            hp(vec![0.0], 0.0, 1.0, Path::One),
            StepsizeController::fixed(0.5),
            false,
        )
        .unwrap();
        id.state.w_plus = array![[0.3]];
        id.state.psi_plus = array![[0.5]];
        id.step_w(&[0.01]);
        assert!((id.state.w_plus[[0, 0]] - 0.395).abs() < 1e-15);
        assert_eq!(id.state.w_minus[[0, 0]], 0.0);
        assert!((id.w_hat()[[0, 0]] - 0.395).abs() < 1e-15);
    }

    #[test]
    fn step_w_path_one_fixed_point() {
        // Ŵ = Ψ̂₁, γ = 0, μ = 0 makes V vanish and Ŵ stay put
        let mut id = Identifier::new(
            2,
            hp(vec![0.0, 0.0], 0.0, 1.0, Path::One),
            StepsizeController::fixed(0.7),
            false,
        )
        .unwrap();
        id.state.psi_plus.slice_mut(s![.., 0..2]).assign(&array![[0.2, 0.0], [0.3, 0.1]]);
        id.state.w_plus = array![[0.2, 0.0], [0.3, 0.1]];
        let before = id.w_hat();
        id.step_w(&[0.0, 0.0]);
        assert_eq!(id.w_hat(), before);
    }

    #[test]
    fn path_two_w_identical_to_first_block() {
        let inst = crate::testutil::stable_instance(&TopologySpec::random_default(4), 2, 80, 20, 3);
        let mut id = Identifier::new(
            4,
            hp(vec![0.2, 0.1], 0.3, 0.95, Path::Two),
            StepsizeController::default(),
            false,
        )
        .unwrap();
        for x in inst.stream.samples() {
            id.ingest(x.view()).unwrap();
            let psi1 = psi_block(&id.psi_hat(), 4, 0).to_owned();
            assert_eq!(id.w_hat(), psi1);
        }
    }

    #[test]
    fn adaptive_mu_oracle() {
        let mut id = Identifier::new(
            2,
            hp(vec![2.0], 0.0, 1.0, Path::One),
            StepsizeController::default(),
            false,
        )
        .unwrap();
        id.state.cross_corr = array![[1.0, -3.0], [0.0, 2.0]];
        let mu_t = id.adaptive_mu();
        assert_eq!(mu_t, vec![6.0]);
        // zero data, zero weights
        id.state.cross_corr = Array2::zeros((2, 2));
        assert_eq!(id.adaptive_mu(), vec![0.0]);
        id.hp.mu = vec![0.0];
        id.state.cross_corr = array![[1.0, -3.0], [0.0, 2.0]];
        assert_eq!(id.adaptive_mu(), vec![0.0]);
    }

    #[test]
    fn zero_stream_keeps_everything_zero() {
        let samples = vec![Array1::<f64>::zeros(3); 30];
        let stream = SignalStream::new(samples.clone(), samples, 0).unwrap();
        let out = identify_stream(
            &stream,
            30,
            hp(vec![0.4, 0.2], 0.5, 0.95, Path::One),
            StepsizeController::default(),
            false,
            None,
            None,
        )
        .unwrap();
        assert_eq!(out.w_star.nnz(), 0);
        assert_eq!(out.identifier.psi_hat(), Array2::zeros((3, 6)));
    }

    #[test]
    fn splits_stay_nonnegative_through_random_runs() {
        for seed in 0..5 {
            let inst =
                crate::testutil::stable_instance(&TopologySpec::random_default(5), 3, 120, 20, 40 + seed);
            let stream = inst.stream;
            for path in [Path::One, Path::Two] {
                let mut id = Identifier::new(
                    5,
                    hp(vec![0.3, 0.2, 0.1], 0.4, 0.9, path),
                    StepsizeController::default(),
                    false,
                )
                .unwrap();
                for x in stream.samples() {
                    id.ingest(x.view()).unwrap();
                    let min = id
                        .state()
                        .psi_plus
                        .iter()
                        .chain(id.state().psi_minus.iter())
                        .chain(id.state().w_plus.iter())
                        .chain(id.state().w_minus.iter())
                        .fold(f64::INFINITY, |m, v| m.min(*v));
                    assert!(min >= 0.0, "negative split entry {min}");
                }
            }
        }
    }

    #[test]
    fn armijo_accepted_steps_satisfy_sufficient_decrease() {
        let inst = crate::testutil::stable_instance(&TopologySpec::random_default(4), 2, 100, 20, 70);
        let stream = inst.stream;
        let sc = StepsizeController::default();
        let mut id = Identifier::new(4, hp(vec![0.3, 0.15], 0.5, 0.9, Path::Two), sc, false).unwrap();
        let mut checked = 0;
        for x in stream.samples() {
            let diag = id.ingest(x.view()).unwrap();
            for o in diag.psi_steps.iter().chain(diag.w_step.iter()) {
                if o.accepted && sc.max_backtracks > 0 {
                    let slack = 1e-9 * o.f_before.abs().max(1.0);
                    assert!(
                        o.f_after <= o.f_before - sc.sufficient_decrease * o.step * o.grad_sq + slack,
                        "decrease violated: {} -> {} (step {}, g2 {})",
                        o.f_before,
                        o.f_after,
                        o.step,
                        o.grad_sq
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 50, "line search barely exercised ({checked} accepts)");
    }

    #[test]
    fn online_matches_handrolled_batch_descent() {
        // λ=1, μ=γ=0, fixed step: the online recursion must replay batch
        // gradient descent that recomputes its sums from scratch each step.
        let n = 2;
        let p_order = 1;
        let stream = random_stream(n, 20, 5);
        let alpha = 0.05;
        let mut id = Identifier::new(
            n,
            hp(vec![0.0], 0.0, 1.0, Path::Two),
            StepsizeController::fixed(alpha),
            false,
        )
        .unwrap();
        for x in stream.samples() {
            id.ingest(x.view()).unwrap();
        }

        // independent plain-loop implementation of the same descent
        let mut plus = vec![vec![0.0_f64; n * p_order]; n];
        let mut minus = plus.clone();
        let raw: Vec<Vec<f64>> = stream.samples().iter().map(|x| x.to_vec()).collect();
        for t in 1..=raw.len() {
            let mut r = vec![vec![0.0_f64; n]; n];
            let mut p_mat = vec![vec![0.0_f64; n]; n];
            for tau in 1..=t {
                let lag: Vec<f64> = if tau >= 2 { raw[tau - 2].clone() } else { vec![0.0; n] };
                for i in 0..n {
                    for j in 0..n {
                        r[i][j] += lag[i] * lag[j];
                        p_mat[i][j] += raw[tau - 1][i] * lag[j];
                    }
                }
            }
            let mut g = vec![vec![0.0_f64; n]; n];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        g[i][j] += (plus[i][k] - minus[i][k]) * r[k][j];
                    }
                    g[i][j] -= p_mat[i][j];
                }
            }
            for i in 0..n {
                for j in 0..n {
                    plus[i][j] = (plus[i][j] - alpha * g[i][j]).max(0.0);
                    minus[i][j] = (minus[i][j] + alpha * g[i][j]).max(0.0);
                }
            }
        }
        let psi = id.psi_hat();
        for i in 0..n {
            for j in 0..n {
                let oracle = plus[i][j] - minus[i][j];
                assert!(
                    (psi[[i, j]] - oracle).abs() < 1e-8,
                    "entry ({i},{j}): {} vs oracle {}",
                    psi[[i, j]],
                    oracle
                );
            }
        }
    }

    #[test]
    fn data_fixed_point_is_scale_covariant() {
        // the normal equations ΨR = P give the same minimizer when the
        // stream is rescaled by any non-zero constant
        let stream = random_stream(3, 40, 9);
        let p_order = 2;
        let solve_normal = |scale: f64| -> Array2<f64> {
            let np = 3 * p_order;
            let mut r = nalgebra::DMatrix::<f64>::zeros(np, np);
            let mut p_mat = nalgebra::DMatrix::<f64>::zeros(3, np);
            for tau in 1..=stream.len() {
                let lags = lag_stack(&stream, tau, p_order) * scale;
                let x = &stream.samples()[tau - 1] * scale;
                for i in 0..np {
                    for j in 0..np {
                        r[(i, j)] += lags[i] * lags[j];
                    }
                }
                for i in 0..3 {
                    for j in 0..np {
                        p_mat[(i, j)] += x[i] * lags[j];
                    }
                }
            }
            // Ψ R = P  =>  Rᵀ Ψᵀ = Pᵀ
            let solved = r
                .transpose()
                .lu()
                .solve(&p_mat.transpose())
                .expect("generic random stream keeps R nonsingular");
            Array2::from_shape_fn((3, np), |(i, j)| solved[(j, i)])
        };
        let base = solve_normal(1.0);
        let scaled = solve_normal(3.7);
        let err = (&base - &scaled).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = base.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-8 * scale, "minimizer moved by {err}");
    }

    #[test]
    fn plateau_rule_stops_flat_traces() {
        let rule = PlateauRule { window: 5, rel_tol: 1e-3 };
        let flat = vec![0.5; 10];
        assert!(plateau_reached(&flat, &rule));
        let moving: Vec<f64> = (0..10).map(|i| 1.0 / (i + 1) as f64).collect();
        assert!(!plateau_reached(&moving, &rule));
        assert!(!plateau_reached(&flat[..9], &rule));
    }

    #[test]
    fn identify_stream_rejects_bad_t_star() {
        let stream = random_stream(2, 10, 1);
        let result = identify_stream(
            &stream,
            11,
            hp(vec![0.1], 0.0, 0.95, Path::One),
            StepsizeController::default(),
            false,
            None,
            None,
        );
        assert!(matches!(result, Err(GsoError::InvalidArgument(_))));
    }
}
