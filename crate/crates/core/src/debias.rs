//! Support-masked debiasing and temporal-tap recovery.
//!
//! The identification stage trades estimation accuracy for support
//! discovery: its L1 and commutator penalties bias every surviving entry.
//! This stage freezes the discovered support, re-estimates the surviving
//! entries by unregularized least squares (the correlation recursions
//! simply keep running), and recovers the flattened tap vector ĥ with a
//! sparsity-attracting LMS update:
//!
//! ```text
//! G_t  = mask ∘ (Ψ̂_{t-1} R_t − P_t)          masked gradient step on Ψ̂
//! Ŵ_t  = Ψ̂_{1,t}                              first lag block
//! Y_t  = [x_{t-1}, Ŵx_{t-1}, ..., Ŵ^P x_{t-P}] regressor of all vertex-time shifts
//! e_t  = x_t − Y_t ĥ_{t-1}
//! ĥ_t  = ĥ_{t-1} + ρ_t (Y_tᵀ e_t − η_t b_t),   b_i = sign(ĥ_i)/(ε + |ĥ_i|)
//! ```
//!
//! The attractor b is the gradient of the reweighted penalty
//! Σ log(ε + |h_i|), so small taps are pulled to zero while large ones feel
//! a vanishing pull. `sign(0) = 0`: zeroed taps feel nothing.

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{GsoError, Result};
use crate::graph::{GsoMatrix, TopologyKind};
use crate::identify::{
    armijo_search, data_gradient, data_objective, psi_block, AlphaInit, ArmijoOutcome, Identifier,
    StepsizeController,
};
use crate::metrics::{nmse_gso, nmse_signal, PhaseTrace};
use crate::sim::{total_coeff_len, ArCoefficients};

/// How the allowed non-zeros of Ψ̂ follow from the support of Ŵ*.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// Block p allows entry (i,j) when j reaches i within p hops of the
    /// Ŵ* support (including staying put): Ψ_p is a degree-p polynomial in W.
    #[default]
    Reachability,
    /// Every block replicates the Ŵ* support plus the diagonal.
    ReplicateFirst,
}

/// Frozen supports for the debias stage.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask {
    /// Allowed non-zeros of Ψ̂, N × NP.
    pub psi: Array2<bool>,
    /// Non-zeros of Ŵ*, N × N.
    pub w: Array2<bool>,
}

impl SupportMask {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn p_order(&self) -> usize {
        self.psi.ncols() / self.w.ncols()
    }
}

/// Boolean matrix product: reachability composition.
fn bool_mul(a: &Array2<bool>, b: &Array2<bool>) -> Array2<bool> {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| (0..n).any(|k| a[[i, k]] && b[[k, j]]))
}

/// Threshold Ŵ* at `support_eps` relative to its own largest magnitude and
/// derive the per-block Ψ̂ mask. The diagonal is always allowed (the
/// zero-power term of every block lives there).
pub fn build_support_mask(
    w_star: &GsoMatrix,
    p_order: usize,
    support_eps: f64,
    mode: MaskMode,
) -> Result<SupportMask> {
    if support_eps < 0.0 {
        return Err(GsoError::invalid("support_eps must be non-negative"));
    }
    if p_order == 0 {
        return Err(GsoError::invalid("p_order must be positive"));
    }
    let n = w_star.n();
    let threshold = support_eps * w_star.max_abs();
    let w_mask = Array2::from_shape_fn((n, n), |(i, j)| w_star.entries()[[i, j]].abs() > threshold);
    if !w_mask.iter().any(|b| *b) {
        return Err(GsoError::DegenerateSupport);
    }

    let mut psi = Array2::from_elem((n, n * p_order), false);
    match mode {
        MaskMode::Reachability => {
            // running union of powers 0..=p of the w support
            let mut power = Array2::from_shape_fn((n, n), |(i, j)| i == j);
            let mut union = power.clone();
            for p in 0..p_order {
                power = bool_mul(&power, &w_mask);
                union.zip_mut_with(&power, |u, v| *u = *u || *v);
                psi.slice_mut(s![.., p * n..(p + 1) * n]).assign(&union);
            }
        }
        MaskMode::ReplicateFirst => {
            let block = Array2::from_shape_fn((n, n), |(i, j)| i == j || w_mask[[i, j]]);
            for p in 0..p_order {
                psi.slice_mut(s![.., p * n..(p + 1) * n]).assign(&block);
            }
        }
    }
    Ok(SupportMask { psi, w: w_mask })
}

/// Settings of the tap estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TapEstimatorSettings {
    /// Relative weight of the sparsity attractor; the per-step weight is
    /// `eta · ‖Y_tᵀ x_t‖_∞`.
    pub eta: f64,
    /// Attractor denominator offset.
    pub epsilon: f64,
    /// Use the λ-weighted recursive normal-equation form instead of the
    /// instantaneous LMS form.
    pub recursive: bool,
}

impl Default for TapEstimatorSettings {
    fn default() -> Self {
        TapEstimatorSettings { eta: 0.01, epsilon: 1e-2, recursive: false }
    }
}

/// All recursively maintained quantities of the debias stage.
#[derive(Clone, Debug)]
pub struct DebiasState {
    pub t: usize,
    pub n: usize,
    pub p_order: usize,
    /// Masked coefficient stack; off-mask entries are exactly zero at all
    /// times.
    pub psi_hat: Array2<f64>,
    pub w_hat: Array2<f64>,
    /// Flattened tap estimate, length M = P(P+3)/2.
    pub h_hat: Array1<f64>,
    pub lag_autocorr: Array2<f64>,
    pub cross_corr: Array2<f64>,
    pub weighted_energy: f64,
    /// Recursive-form normal-equation accumulators (allocated on demand).
    pub h_autocorr: Option<Array2<f64>>,
    pub h_cross: Option<Array1<f64>>,
    pub armijo_floor_hits: u64,
    buffer: VecDeque<Array1<f64>>,
}

impl DebiasState {
    fn stacked_lags(&self) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.n * self.p_order);
        for (k, x) in self.buffer.iter().enumerate() {
            out.slice_mut(s![k * self.n..(k + 1) * self.n]).assign(x);
        }
        out
    }

    fn push_sample(&mut self, x: Array1<f64>) {
        self.buffer.push_front(x);
        self.buffer.truncate(self.p_order);
    }
}

/// Per-sample diagnostics of the debias stage.
#[derive(Clone, Debug)]
pub struct DebiasDiagnostics {
    /// ‖e_t‖₂ of the tap-model residual; drives the stop rule.
    pub residual_norm: f64,
    /// Signal NMSE of the same residual.
    pub sigma: Option<f64>,
    pub psi_steps: Vec<ArmijoOutcome>,
    pub h_step: ArmijoOutcome,
}

/// The debias-stage state machine; same single-writer contract as the
/// identifier, of which it is the linear continuation.
#[derive(Clone, Debug)]
pub struct Debiaser {
    state: DebiasState,
    mask: SupportMask,
    lambda: f64,
    sc: StepsizeController,
    taps: TapEstimatorSettings,
}

impl Debiaser {
    /// Continue from a finished identification stage: the correlation
    /// recursions, the sample buffer and the time index carry over, and Ψ̂
    /// is projected onto the mask (the frozen zeros are zeroed now and stay
    /// zero).
    pub fn from_identifier(
        identifier: &Identifier,
        mask: SupportMask,
        sc: StepsizeController,
        taps: TapEstimatorSettings,
    ) -> Result<Self> {
        let st = identifier.state();
        if mask.n() != st.n || mask.p_order() != st.p_order {
            return Err(GsoError::invalid("mask shape does not match the identifier state"));
        }
        sc.validate()?;
        let mut psi_hat = identifier.psi_hat();
        psi_hat.zip_mut_with(&mask.psi, |v, keep| {
            if !keep {
                *v = 0.0;
            }
        });
        let w_hat = psi_block(&psi_hat, st.n, 0).to_owned();
        let m = total_coeff_len(st.p_order);
        let state = DebiasState {
            t: st.t,
            n: st.n,
            p_order: st.p_order,
            psi_hat,
            w_hat,
            h_hat: Array1::zeros(m),
            lag_autocorr: st.lag_autocorr.clone(),
            cross_corr: st.cross_corr.clone(),
            weighted_energy: st.weighted_energy,
            h_autocorr: taps.recursive.then(|| Array2::zeros((m, m))),
            h_cross: taps.recursive.then(|| Array1::zeros(m)),
            armijo_floor_hits: 0,
            buffer: st.buffer.clone(),
        };
        Ok(Debiaser { state, mask, lambda: identifier.hyper().lambda, sc, taps })
    }

    pub fn state(&self) -> &DebiasState {
        &self.state
    }

    pub fn mask(&self) -> &SupportMask {
        &self.mask
    }

    pub fn w_estimate(&self) -> GsoMatrix {
        GsoMatrix::new(self.state.w_hat.clone(), TopologyKind::Estimated)
            .expect("state matrices are square by construction")
    }

    pub fn h_estimate(&self) -> Result<ArCoefficients> {
        ArCoefficients::from_flat(self.state.p_order, self.state.h_hat.as_slice().unwrap())
    }

    /// One debias step: correlation updates, the mask-projected gradient
    /// step on Ψ̂, the Ŵ read-off, and the tap LMS update.
    pub fn ingest(&mut self, x_t: ArrayView1<f64>) -> Result<DebiasDiagnostics> {
        let n = self.state.n;
        if x_t.len() != n {
            return Err(GsoError::invalid(format!(
                "sample dimension {} does not match debiaser dimension {n}",
                x_t.len()
            )));
        }
        let lags = self.state.stacked_lags();
        self.update_correlations(x_t, &lags);
        let psi_steps = self.step_psi_masked();
        self.state.w_hat = psi_block(&self.state.psi_hat, n, 0).to_owned();
        let (h_step, residual_norm, sigma) = self.step_taps(x_t);
        self.state.push_sample(x_t.to_owned());
        Ok(DebiasDiagnostics { residual_norm, sigma, psi_steps, h_step })
    }

    fn update_correlations(&mut self, x_t: ArrayView1<f64>, lags: &Array1<f64>) {
        let lam = self.lambda;
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

    /// Unregularized least squares restricted to the mask: per-lag Armijo
    /// steps along the mask-projected gradient.
    fn step_psi_masked(&mut self) -> Vec<ArmijoOutcome> {
        let n = self.state.n;
        let p_order = self.state.p_order;
        let mut grad = data_gradient(&self.state.psi_hat, &self.state.lag_autocorr, &self.state.cross_corr);
        grad.zip_mut_with(&self.mask.psi, |g, keep| {
            if !keep {
                *g = 0.0;
            }
        });
        let f_old = data_objective(
            &self.state.psi_hat,
            &self.state.lag_autocorr,
            &self.state.cross_corr,
            self.state.weighted_energy,
        );
        let alpha_init = match self.sc.alpha_init {
            AlphaInit::Fixed(a) => a,
            AlphaInit::InverseTrace { eps } => {
                let tr = self.state.lag_autocorr.diag().sum();
                1.0 / (tr / p_order as f64 + eps)
            }
        };
        let mut next = self.state.psi_hat.clone();
        let mut outcomes = Vec::with_capacity(p_order);
        for p in 0..p_order {
            let g_block = psi_block(&grad, n, p).to_owned();
            let grad_sq = g_block.iter().map(|v| v * v).sum::<f64>();
            let state = &self.state;
            let eval = |alpha: f64| {
                let mut cand = state.psi_hat.clone();
                let mut block = cand.slice_mut(s![.., p * n..(p + 1) * n]);
                block.zip_mut_with(&g_block, |b, g| *b -= alpha * g);
                data_objective(&cand, &state.lag_autocorr, &state.cross_corr, state.weighted_energy)
            };
            let outcome = armijo_search(&self.sc, alpha_init, f_old, grad_sq, eval);
            if !outcome.accepted {
                self.state.armijo_floor_hits += 1;
            }
            let mut block = next.slice_mut(s![.., p * n..(p + 1) * n]);
            block.zip_mut_with(&g_block, |b, g| *b -= outcome.step * g);
            outcomes.push(outcome);
        }
        self.state.psi_hat = next;
        outcomes
    }

    /// Regressor of all admissible vertex-time shifts: columns grouped by
    /// lag p, powers Ŵ⁰..Ŵᵖ applied to x_{t-p}; N × M.
    fn regressors(&self) -> Array2<f64> {
        let n = self.state.n;
        let p_order = self.state.p_order;
        let m = total_coeff_len(p_order);
        let mut y = Array2::<f64>::zeros((n, m));
        let mut col = 0;
        for p in 1..=p_order {
            let mut v = self
                .state
                .buffer
                .get(p - 1)
                .cloned()
                .unwrap_or_else(|| Array1::zeros(n));
            y.column_mut(col).assign(&v);
            col += 1;
            for _ in 1..=p {
                v = self.state.w_hat.dot(&v);
                y.column_mut(col).assign(&v);
                col += 1;
            }
        }
        debug_assert_eq!(col, m);
        y
    }

    /// Sparsity-attracting LMS update of ĥ with an Armijo-chosen ρ.
    fn step_taps(&mut self, x_t: ArrayView1<f64>) -> (ArmijoOutcome, f64, Option<f64>) {
        let m = self.state.h_hat.len();
        let y = self.regressors();
        let h_prev = self.state.h_hat.clone();
        let residual = &x_t - &y.dot(&h_prev);
        let residual_norm = residual.dot(&residual).sqrt();
        let sigma = nmse_signal(residual.view(), x_t);

        let yx = y.t().dot(&x_t);
        let eta_t = self.taps.eta * yx.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let eps = self.taps.epsilon;
        let attractor = h_prev.mapv(|h| sign(h) / (eps + h.abs()));

        // gradient of the running tap objective
        let grad_h: Array1<f64> = if self.taps.recursive {
            let c = self.state.h_autocorr.as_mut().expect("allocated for recursive form");
            let u = self.state.h_cross.as_mut().expect("allocated for recursive form");
            let yty = y.t().dot(&y);
            c.zip_mut_with(&yty, |a, b| *a = self.lambda * *a + b);
            u.zip_mut_with(&yx, |a, b| *a = self.lambda * *a + b);
            c.dot(&h_prev) - &*u + &(&attractor * eta_t)
        } else {
            -(y.t().dot(&residual)) + &attractor * eta_t
        };
        let grad_sq = grad_h.dot(&grad_h);

        let rho_init = match self.sc.alpha_init {
            AlphaInit::Fixed(a) => a,
            AlphaInit::InverseTrace { eps: e } => {
                let curvature = if self.taps.recursive {
                    self.state.h_autocorr.as_ref().unwrap().diag().sum()
                } else {
                    y.iter().map(|v| v * v).sum::<f64>()
                };
                1.0 / (curvature / m as f64 + e)
            }
        };

        // The line search measures sufficient decrease on the data term
        // only. The attractor is a reweighting heuristic whose zero point
        // (sign(0) = 0) deliberately feels no pull, so folding its
        // antiderivative into the search objective would wall off every
        // step away from an exact zero; shrinkage overshoot is bounded by
        // the backtracking on the data term instead.
        let f_old;
        let eval: Box<dyn FnMut(f64) -> f64> = if self.taps.recursive {
            let c = self.state.h_autocorr.as_ref().unwrap().clone();
            let u = self.state.h_cross.as_ref().unwrap().clone();
            f_old = 0.5 * (h_prev.dot(&c.dot(&h_prev)) - 2.0 * u.dot(&h_prev));
            let h0 = h_prev.clone();
            let g = grad_h.clone();
            Box::new(move |rho: f64| {
                let h = &h0 - &(&g * rho);
                0.5 * (h.dot(&c.dot(&h)) - 2.0 * u.dot(&h))
            })
        } else {
            let e0 = residual.to_owned();
            f_old = 0.5 * e0.dot(&e0);
            let y_own = y.clone();
            let x_own = x_t.to_owned();
            let h0 = h_prev.clone();
            let g = grad_h.clone();
            Box::new(move |rho: f64| {
                let h = &h0 - &(&g * rho);
                let e = &x_own - &y_own.dot(&h);
                0.5 * e.dot(&e)
            })
        };
        let outcome = armijo_search(&self.sc, rho_init, f_old, grad_sq, eval);
        if !outcome.accepted {
            self.state.armijo_floor_hits += 1;
        }
        self.state.h_hat = &h_prev - &(&grad_h * outcome.step);
        (outcome, residual_norm, sigma)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Result of running the debias stage over a stream tail.
#[derive(Clone, Debug)]
pub struct DebiasOutcome {
    pub debiaser: Debiaser,
    pub w_final: GsoMatrix,
    pub h_final: ArCoefficients,
    pub trace: PhaseTrace,
    /// Step (1-based within the tail) at which ‖e‖ < δ stopped the loop.
    pub stopped_at: Option<usize>,
}

/// Feed the stream tail through the debiaser, stopping early when the tap
/// residual drops below `delta` (checked after each step, so at least one
/// step always runs).
pub fn debias_stream(
    mut debiaser: Debiaser,
    tail: &[Array1<f64>],
    delta: f64,
    w_true: Option<&GsoMatrix>,
) -> Result<DebiasOutcome> {
    if tail.is_empty() {
        return Err(GsoError::invalid("debias stage needs at least one sample"));
    }
    let mut trace = PhaseTrace::new(debiaser.state().t + 1);
    let mut stopped_at = None;
    for (idx, x) in tail.iter().enumerate() {
        let diag = debiaser.ingest(x.view())?;
        let w_est = debiaser.w_estimate();
        let zeta = match w_true {
            Some(truth) => Some(nmse_gso(truth, &w_est)?),
            None => None,
        };
        trace.push(diag.sigma, zeta, w_est.nnz());
        if diag.residual_norm < delta {
            stopped_at = Some(idx + 1);
            break;
        }
    }
    let w_final = debiaser.w_estimate();
    let h_final = debiaser.h_estimate()?;
    Ok(DebiasOutcome { debiaser, w_final, h_final, trace, stopped_at })
}
