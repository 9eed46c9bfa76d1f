//! The causal vertex-time autoregressive model and its simulator.
//!
//! The process couples one vertex shift per time step:
//!
//! ```text
//! x_t = sum_{p=1..P} Psi_p x_{t-p} + w_t,    Psi_p = sum_{l=0..p} h_p[l]·W^l
//! ```
//!
//! so the lag-p coefficient matrix is a degree-p polynomial in the shift
//! operator W. Causality caps the vertex shift at the time lag, which makes
//! block p carry exactly p+1 taps and the flattened coefficient vector have
//! length M = P(P+3)/2.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_distr::StandardNormal;

use crate::error::{GsoError, Result};
use crate::graph::{filter_poly, GsoMatrix};
use crate::topology::RngSeed;

/// Divergence guard for the simulator; normalized processes stay O(1).
pub const INSTABILITY_NORM_LIMIT: f64 = 1e6;

/// Ragged stack of per-lag filter taps; block p holds the p+1 taps of the
/// degree-p filter for lag p.
#[derive(Clone, Debug, PartialEq)]
pub struct ArCoefficients {
    blocks: Vec<Vec<f64>>,
}

impl ArCoefficients {
    pub fn new(blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(GsoError::invalid("AR order must be at least 1"));
        }
        for (idx, block) in blocks.iter().enumerate() {
            let p = idx + 1;
            if block.len() != p + 1 {
                return Err(GsoError::invalid(format!(
                    "lag-{p} block must have {} taps, got {}",
                    p + 1,
                    block.len()
                )));
            }
        }
        Ok(ArCoefficients { blocks })
    }

    pub fn zeros(p_order: usize) -> Self {
        ArCoefficients {
            blocks: (1..=p_order).map(|p| vec![0.0; p + 1]).collect(),
        }
    }

    /// Rebuild the ragged stack from a flat vector of length P(P+3)/2.
    pub fn from_flat(p_order: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != total_coeff_len(p_order) {
            return Err(GsoError::invalid(format!(
                "flat coefficient vector must have length {}, got {}",
                total_coeff_len(p_order),
                flat.len()
            )));
        }
        let mut blocks = Vec::with_capacity(p_order);
        let mut off = 0;
        for p in 1..=p_order {
            blocks.push(flat[off..off + p + 1].to_vec());
            off += p + 1;
        }
        Ok(ArCoefficients { blocks })
    }

    pub fn p_order(&self) -> usize {
        self.blocks.len()
    }

    /// Taps for lag p (1-based).
    pub fn block(&self, p: usize) -> &[f64] {
        &self.blocks[p - 1]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// Total tap count M = P(P+3)/2.
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }
}

/// M = P(P+3)/2 for order P.
pub fn total_coeff_len(p_order: usize) -> usize {
    p_order * (p_order + 3) / 2
}

/// A simulated signal stream together with the innovations that drove it,
/// so tests can reconstruct residuals exactly.
#[derive(Clone, Debug)]
pub struct SignalStream {
    n: usize,
    samples: Vec<Array1<f64>>,
    noise: Vec<Array1<f64>>,
    burn_in_discarded: usize,
}

impl SignalStream {
    pub fn new(samples: Vec<Array1<f64>>, noise: Vec<Array1<f64>>, burn_in_discarded: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(GsoError::invalid("stream must hold at least one sample"));
        }
        if samples.len() != noise.len() {
            return Err(GsoError::invalid("samples and noise record must have equal length"));
        }
        let n = samples[0].len();
        if samples.iter().chain(noise.iter()).any(|v| v.len() != n) {
            return Err(GsoError::invalid("all stream vectors must share one dimension"));
        }
        Ok(SignalStream { n, samples, noise, burn_in_discarded })
    }

    /// A stream loaded from disk, with no innovation record.
    pub fn from_samples(samples: Vec<Array1<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(GsoError::invalid("stream must hold at least one sample"));
        }
        let n = samples[0].len();
        if samples.iter().any(|v| v.len() != n) {
            return Err(GsoError::invalid("all stream vectors must share one dimension"));
        }
        Ok(SignalStream { n, samples, noise: Vec::new(), burn_in_discarded: 0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Retained samples; math index t (1-based) lives at `samples()[t-1]`.
    pub fn samples(&self) -> &[Array1<f64>] {
        &self.samples
    }

    /// Innovations matching the samples; empty for loaded streams.
    pub fn noise(&self) -> &[Array1<f64>] {
        &self.noise
    }

    pub fn burn_in_discarded(&self) -> usize {
        self.burn_in_discarded
    }
}

/// Materialize the lag coefficient matrices `[Psi_1, ..., Psi_P]`.
pub fn build_psi(w: &GsoMatrix, coeffs: &ArCoefficients) -> Result<Vec<Array2<f64>>> {
    Ok(coeffs
        .blocks()
        .iter()
        .map(|taps| filter_poly(w.entries(), taps))
        .collect())
}

/// Simulate the driven recursion from injected innovations.
///
/// `noise[t-1]` is the innovation at time t; the recursion starts from zero
/// state (x_i = 0 for i <= 0) and the first `burn_in` samples are dropped.
pub fn simulate_driven(
    w: &GsoMatrix,
    coeffs: &ArCoefficients,
    noise: &[Array1<f64>],
    burn_in: usize,
) -> Result<SignalStream> {
    let n = w.n();
    if noise.len() <= burn_in {
        return Err(GsoError::invalid(format!(
            "need more than burn_in={burn_in} samples, got {}",
            noise.len()
        )));
    }
    if noise.iter().any(|v| v.len() != n) {
        return Err(GsoError::invalid("innovation dimension does not match the operator"));
    }
    let psi = build_psi(w, coeffs)?;

    let mut history: Vec<Array1<f64>> = Vec::with_capacity(noise.len());
    for (idx, w_t) in noise.iter().enumerate() {
        let t = idx + 1;
        let mut x = w_t.clone();
        for (p, psi_p) in psi.iter().enumerate() {
            let lag = p + 1;
            if t > lag {
                x = x + psi_p.dot(&history[t - lag - 1]);
            }
        }
        let norm = x.dot(&x).sqrt();
        if !norm.is_finite() || norm > INSTABILITY_NORM_LIMIT {
            return Err(GsoError::Instability { t, limit: INSTABILITY_NORM_LIMIT });
        }
        history.push(x);
    }

    let samples = history.split_off(burn_in);
    let retained_noise = noise[burn_in..].to_vec();
    SignalStream::new(samples, retained_noise, burn_in)
}

/// Simulate `t_total` steps driven by i.i.d. `noise_std`-scaled Gaussian
/// innovations, discarding the first `burn_in`. Deterministic given the seed.
pub fn simulate(
    w: &GsoMatrix,
    coeffs: &ArCoefficients,
    t_total: usize,
    burn_in: usize,
    noise_std: f64,
    seed: RngSeed,
) -> Result<SignalStream> {
    if t_total <= burn_in {
        return Err(GsoError::invalid(format!(
            "t_total={t_total} must exceed burn_in={burn_in}"
        )));
    }
    if noise_std < 0.0 {
        return Err(GsoError::invalid("noise_std must be non-negative"));
    }
    let n = w.n();
    let mut rng = seed.rng();
    let noise: Vec<Array1<f64>> = (0..t_total)
        .map(|_| Array1::from_shape_fn(n, |_| noise_std * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    simulate_driven(w, coeffs, &noise, burn_in)
}

/// Stack the P most recent past samples before time t, newest first:
/// `[x_{t-1}; x_{t-2}; ...; x_{t-P}]`, zero-filling lags that precede the
/// stream start.
pub fn lag_stack(stream: &SignalStream, t: usize, p_order: usize) -> Array1<f64> {
    assert!(
        t >= 1 && t <= stream.len(),
        "lag_stack index t={t} outside 1..={}",
        stream.len()
    );
    let n = stream.n();
    let mut out = Array1::<f64>::zeros(n * p_order);
    for lag in 1..=p_order {
        if t > lag {
            let src = &stream.samples()[t - lag - 1];
            out.slice_mut(ndarray::s![(lag - 1) * n..lag * n]).assign(src);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TopologyKind;
    use crate::topology::{gen_ar_coeffs, gen_gso, TopologySpec};
    use ndarray::array;

    fn scalar_w(v: f64) -> GsoMatrix {
        GsoMatrix::new(array![[v]], TopologyKind::Custom).unwrap()
    }

    #[test]
    fn coeff_shape_validation() {
        assert!(ArCoefficients::new(vec![vec![0.1, 0.2]]).is_ok());
        assert!(ArCoefficients::new(vec![vec![0.1]]).is_err());
        assert!(ArCoefficients::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).is_err());
        let c = ArCoefficients::new(vec![vec![1.0, 2.0], vec![3.0, 4.0, 5.0]]).unwrap();
        assert_eq!(c.total_len(), 5);
        assert_eq!(c.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let back = ArCoefficients::from_flat(2, &c.flatten()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn build_psi_unit_lag_is_w() {
        let w = GsoMatrix::new(array![[0.0, 0.5], [0.25, 0.0]], TopologyKind::Custom).unwrap();
        let coeffs = ArCoefficients::new(vec![vec![0.0, 1.0]]).unwrap();
        let psi = build_psi(&w, &coeffs).unwrap();
        assert_eq!(psi[0], *w.entries());
    }

    #[test]
    fn build_psi_zero_coeffs() {
        let w = GsoMatrix::new(array![[0.0, 0.5], [0.25, 0.0]], TopologyKind::Custom).unwrap();
        let coeffs = ArCoefficients::zeros(3);
        for psi_p in build_psi(&w, &coeffs).unwrap() {
            assert_eq!(psi_p, Array2::zeros((2, 2)));
        }
    }

    #[test]
    fn build_psi_scalar_oracle() {
        // 0.2 + 0.4·0.5 = 0.4
        let w = scalar_w(0.5);
        let coeffs = ArCoefficients::new(vec![vec![0.2, 0.4]]).unwrap();
        let psi = build_psi(&w, &coeffs).unwrap();
        assert!((psi[0][[0, 0]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn simulate_zero_coeffs_reproduces_noise() {
        let w = GsoMatrix::new(Array2::zeros((3, 3)), TopologyKind::Custom).unwrap();
        let coeffs = ArCoefficients::zeros(2);
        let stream = simulate(&w, &coeffs, 50, 10, 1.0, RngSeed::new(3)).unwrap();
        for (x, v) in stream.samples().iter().zip(stream.noise()) {
            assert_eq!(x, v);
        }
    }

    #[test]
    fn simulate_scalar_recursion_frozen() {
        // x = [1, 0.4, 0.16] for Psi_1 = 0.4 and innovations [1, 0, 0]
        let w = scalar_w(0.5);
        let coeffs = ArCoefficients::new(vec![vec![0.2, 0.4]]).unwrap();
        let noise = vec![array![1.0], array![0.0], array![0.0]];
        let stream = simulate_driven(&w, &coeffs, &noise, 0).unwrap();
        let xs: Vec<f64> = stream.samples().iter().map(|v| v[0]).collect();
        assert!((xs[0] - 1.0).abs() < 1e-15);
        assert!((xs[1] - 0.4).abs() < 1e-15);
        assert!((xs[2] - 0.16).abs() < 1e-15);
    }

    #[test]
    fn simulate_zero_noise_zero_stream() {
        let w = scalar_w(0.5);
        let coeffs = ArCoefficients::new(vec![vec![0.2, 0.4]]).unwrap();
        let stream = simulate(&w, &coeffs, 30, 5, 0.0, RngSeed::new(1)).unwrap();
        assert!(stream.samples().iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn simulate_paper_shape() {
        let spec = TopologySpec::random_default(12);
        let w = gen_gso(&spec, RngSeed::new(11)).unwrap();
        let coeffs = gen_ar_coeffs(3, RngSeed::new(12), 0.25).unwrap();
        let stream = simulate(&w, &coeffs, 1100, 500, 1.0, RngSeed::new(13)).unwrap();
        assert_eq!(stream.len(), 600);
        assert_eq!(stream.burn_in_discarded(), 500);
    }

    #[test]
    fn simulate_divergence_guard_reports_index() {
        // spectral radius 2 makes the recursion explode quickly
        let w = scalar_w(2.0);
        let coeffs = ArCoefficients::new(vec![vec![0.0, 1.0]]).unwrap();
        let err = simulate(&w, &coeffs, 200, 0, 1.0, RngSeed::new(5)).unwrap_err();
        match err {
            GsoError::Instability { t, .. } => assert!(t > 0 && t <= 200),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn residual_reconstructs_noise_after_lag_window() {
        let spec = TopologySpec::random_default(6);
        let w = gen_gso(&spec, RngSeed::new(21)).unwrap();
        let coeffs = gen_ar_coeffs(3, RngSeed::new(22), 0.25).unwrap();
        let stream = simulate(&w, &coeffs, 120, 20, 1.0, RngSeed::new(23)).unwrap();
        let psi = build_psi(&w, &coeffs).unwrap();
        for t in 4..=stream.len() {
            let mut pred = Array1::<f64>::zeros(6);
            for (p, psi_p) in psi.iter().enumerate() {
                pred = pred + psi_p.dot(&stream.samples()[t - (p + 1) - 1]);
            }
            let resid = &stream.samples()[t - 1] - &pred;
            let err = (&resid - &stream.noise()[t - 1])
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(err < 1e-12, "t={t}: residual differs from innovation by {err}");
        }
    }

    #[test]
    fn lag_stack_boundaries_and_order() {
        let s1 = array![1.0, 2.0];
        let s2 = array![3.0, 4.0];
        let s3 = array![5.0, 6.0];
        let noise = vec![s1.clone(), s2.clone(), s3.clone()];
        let stream = SignalStream::new(vec![s1, s2, s3], noise, 0).unwrap();
        // no past samples at t=1
        assert_eq!(lag_stack(&stream, 1, 3), Array1::zeros(6));
        // P=1 is just the previous sample
        assert_eq!(lag_stack(&stream, 2, 1), array![1.0, 2.0]);
        // newest first
        assert_eq!(lag_stack(&stream, 3, 2), array![3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn stationarity_smoke_over_seeds() {
        // variance of the two halves of the retained window stays comparable
        let mut passed = 0;
        let runs = 100;
        for seed in 0..runs {
            let spec = TopologySpec::random_default(12);
            let w = gen_gso(&spec, RngSeed::new(1000 + seed)).unwrap();
            let coeffs = gen_ar_coeffs(3, RngSeed::new(2000 + seed), 0.25).unwrap();
            let stream = match simulate(&w, &coeffs, 1100, 500, 1.0, RngSeed::new(3000 + seed)) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let half = stream.len() / 2;
            let mut ok = true;
            for coord in 0..12 {
                let var = |range: &[Array1<f64>]| {
                    let vals: Vec<f64> = range.iter().map(|x| x[coord]).collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
                };
                let v1 = var(&stream.samples()[..half]);
                let v2 = var(&stream.samples()[half..]);
                if !(v1.is_finite() && v2.is_finite()) || (v1 - v2).abs() >= 0.5 * v1.max(v2) {
                    ok = false;
                    break;
                }
            }
            if ok {
                passed += 1;
            }
        }
        assert!(passed >= 95, "only {passed}/{runs} runs kept half-window variances within 50%");
    }
}
