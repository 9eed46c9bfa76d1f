//! Multi-realization aggregation: mean rates and step-aligned mean traces.

use gso_core::metrics::{mean_finite, RecoveryReport};
use serde::Serialize;

/// Means over a batch of trial reports. Trace entries are averaged per
/// step over the finite values present at that step (plateau-stopped runs
/// may be shorter); a step nobody reached is NaN.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_p_fa: Option<f64>,
    pub mean_p_m: Option<f64>,
    pub mean_support_accuracy: f64,
    pub mean_sigma_trace: Vec<f64>,
    pub mean_zeta_trace: Vec<f64>,
    /// Mean non-zero count of the running estimate; empty when the caller
    /// did not supply per-trial counts.
    pub mean_w_nnz_trace: Vec<f64>,
}

fn mean_traces(traces: Vec<&[f64]>) -> Vec<f64> {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            mean_finite(traces.iter().filter_map(|t| t.get(i).copied()))
                .unwrap_or(f64::NAN)
        })
        .collect()
}

/// Permutation-invariant means over the reports.
pub fn aggregate(reports: &[RecoveryReport]) -> Summary {
    assert!(!reports.is_empty(), "aggregate needs at least one report");
    let mean_opt = |values: Vec<Option<f64>>| {
        let defined: Vec<f64> = values.into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Summary {
        trials: reports.len(),
        mean_p_fa: mean_opt(reports.iter().map(|r| r.p_fa).collect()),
        mean_p_m: mean_opt(reports.iter().map(|r| r.p_m).collect()),
        mean_support_accuracy: reports.iter().map(|r| r.support_accuracy).sum::<f64>()
            / reports.len() as f64,
        mean_sigma_trace: mean_traces(reports.iter().map(|r| r.sigma_trace.as_slice()).collect()),
        mean_zeta_trace: mean_traces(reports.iter().map(|r| r.zeta_trace.as_slice()).collect()),
        mean_w_nnz_trace: Vec::new(),
    }
}

/// Step-aligned mean of per-trial non-zero counts.
pub fn mean_nnz_trace(traces: &[Vec<usize>]) -> Vec<f64> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let present: Vec<f64> =
                traces.iter().filter_map(|t| t.get(i).map(|v| *v as f64)).collect();
            if present.is_empty() {
                f64::NAN
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(p_fa: Option<f64>, p_m: Option<f64>, sigma: Vec<f64>) -> RecoveryReport {
        RecoveryReport {
            p_fa,
            p_m,
            support_accuracy: 0.9,
            sigma_trace: sigma,
            zeta_trace: vec![],
        }
    }

    #[test]
    fn single_report_is_identity() {
        let r = report(Some(0.1), Some(0.3), vec![1.0, 0.5]);
        let s = aggregate(std::slice::from_ref(&r));
        assert_eq!(s.mean_p_fa, Some(0.1));
        assert_eq!(s.mean_p_m, Some(0.3));
        assert_eq!(s.mean_sigma_trace, vec![1.0, 0.5]);
    }

    #[test]
    fn means_and_permutation_invariance() {
        let a = report(Some(0.1), Some(0.2), vec![1.0, 1.0]);
        let b = report(Some(0.3), Some(0.4), vec![0.0, 0.5]);
        let fwd = aggregate(&[a.clone(), b.clone()]);
        let rev = aggregate(&[b, a]);
        assert_eq!(fwd.mean_p_fa, Some(0.2));
        assert_eq!(fwd.mean_sigma_trace, vec![0.5, 0.75]);
        assert_eq!(fwd.mean_p_fa, rev.mean_p_fa);
        assert_eq!(fwd.mean_sigma_trace, rev.mean_sigma_trace);
    }

    #[test]
    fn undefined_rates_are_excluded() {
        let a = report(Some(0.2), None, vec![]);
        let b = report(Some(0.4), None, vec![]);
        let s = aggregate(&[a, b]);
        assert_eq!(s.mean_p_fa, Some((0.2 + 0.4) / 2.0));
        assert_eq!(s.mean_p_m, None);
    }

    #[test]
    fn ragged_traces_align_by_step() {
        let a = report(None, None, vec![1.0, 1.0, 1.0]);
        let b = report(None, None, vec![0.0]);
        let s = aggregate(&[a, b]);
        assert_eq!(s.mean_sigma_trace, vec![0.5, 1.0, 1.0]);
    }

    #[test]
    fn nnz_trace_mean() {
        let m = mean_nnz_trace(&[vec![4, 2], vec![2]]);
        assert_eq!(m, vec![3.0, 2.0]);
    }
}
