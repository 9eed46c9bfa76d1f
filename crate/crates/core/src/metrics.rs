//! Evaluation quantities: normalized mean squared errors of the signal and
//! the shift operator, and support-recovery error rates.

use ndarray::ArrayView1;
use serde::Serialize;

use crate::error::{GsoError, Result};
use crate::graph::GsoMatrix;

/// Signal NMSE `‖e‖² / ‖x‖²`. Returns `None` when the reference sample is
/// zero, a sentinel excluded from averages rather than an error.
pub fn nmse_signal(e: ArrayView1<f64>, x: ArrayView1<f64>) -> Option<f64> {
    assert_eq!(e.len(), x.len(), "residual and sample dimensions differ");
    let denom = x.dot(&x);
    if denom == 0.0 {
        None
    } else {
        Some(e.dot(&e) / denom)
    }
}

/// Operator NMSE `‖W − Ŵ‖²_F / ‖W‖²_F`.
pub fn nmse_gso(w_true: &GsoMatrix, w_hat: &GsoMatrix) -> Result<f64> {
    if w_true.n() != w_hat.n() {
        return Err(GsoError::invalid(format!(
            "operator sizes differ: {} vs {}",
            w_true.n(),
            w_hat.n()
        )));
    }
    let denom: f64 = w_true.entries().iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(GsoError::invalid("reference operator is identically zero"));
    }
    let num: f64 = w_true
        .entries()
        .iter()
        .zip(w_hat.entries())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / denom)
}

/// Support classification rates of an estimated operator against the truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupportErrors {
    /// Fraction of true-zero entries estimated non-zero; `None` when the
    /// truth has no zero entries.
    pub p_fa: Option<f64>,
    /// Fraction of true-non-zero entries estimated zero; `None` when the
    /// truth has no non-zero entries.
    pub p_m: Option<f64>,
    /// Fraction of all counted entries classified correctly.
    pub support_accuracy: f64,
}

/// Classify entries as non-zero when their magnitude exceeds `support_eps`
/// times that matrix's own largest magnitude, then count false alarms and
/// misses. Relative thresholding makes the rates invariant to rescaling
/// either operator. The diagonal participates unless `include_diagonal` is
/// cleared.
pub fn support_errors(
    w_true: &GsoMatrix,
    w_hat: &GsoMatrix,
    support_eps: f64,
    include_diagonal: bool,
) -> Result<SupportErrors> {
    if w_true.n() != w_hat.n() {
        return Err(GsoError::invalid(format!(
            "operator sizes differ: {} vs {}",
            w_true.n(),
            w_hat.n()
        )));
    }
    if support_eps < 0.0 {
        return Err(GsoError::invalid("support_eps must be non-negative"));
    }
    let n = w_true.n();
    let thresh_true = support_eps * w_true.max_abs();
    let thresh_hat = support_eps * w_hat.max_abs();

    let mut true_zeros = 0usize;
    let mut true_nonzeros = 0usize;
    let mut false_alarms = 0usize;
    let mut misses = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j && !include_diagonal {
                continue;
            }
            let truth_nz = w_true.entries()[[i, j]].abs() > thresh_true;
            let est_nz = w_hat.entries()[[i, j]].abs() > thresh_hat;
            if truth_nz {
                true_nonzeros += 1;
                if !est_nz {
                    misses += 1;
                }
            } else {
                true_zeros += 1;
                if est_nz {
                    false_alarms += 1;
                }
            }
        }
    }
    let counted = true_zeros + true_nonzeros;
    let correct = counted - false_alarms - misses;
    Ok(SupportErrors {
        p_fa: (true_zeros > 0).then(|| false_alarms as f64 / true_zeros as f64),
        p_m: (true_nonzeros > 0).then(|| misses as f64 / true_nonzeros as f64),
        support_accuracy: correct as f64 / counted as f64,
    })
}

/// Per-step record of one estimation phase: signal NMSE, operator NMSE
/// against the known truth (NaN when no truth was supplied), and the
/// non-zero count of the running operator estimate.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PhaseTrace {
    /// Time index of the first recorded step (1-based).
    pub start_t: usize,
    pub sigma: Vec<f64>,
    pub zeta: Vec<f64>,
    pub w_nnz: Vec<usize>,
}

impl PhaseTrace {
    pub fn new(start_t: usize) -> Self {
        PhaseTrace { start_t, sigma: Vec::new(), zeta: Vec::new(), w_nnz: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn push(&mut self, sigma: Option<f64>, zeta: Option<f64>, w_nnz: usize) {
        self.sigma.push(sigma.unwrap_or(f64::NAN));
        self.zeta.push(zeta.unwrap_or(f64::NAN));
        self.w_nnz.push(w_nnz);
    }
}

/// Per-trial outcome of the full identify-then-debias pipeline.
#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub p_fa: Option<f64>,
    pub p_m: Option<f64>,
    pub support_accuracy: f64,
    /// Concatenated signal-NMSE trace over both phases.
    pub sigma_trace: Vec<f64>,
    /// Concatenated operator-NMSE trace over both phases.
    pub zeta_trace: Vec<f64>,
}

/// Mean of the finite values; `None` when nothing finite is present.
pub fn mean_finite<I: IntoIterator<Item = f64>>(values: I) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        if v.is_finite() {
            sum += v;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}
