//! On-disk formats.
//!
//! Matrices and signals travel as headerless CSV with 17 significant digits
//! (lossless for f64). Matrix files are row-major and conventionally carry
//! the `.mat.csv` extension; signal files hold one time step per row;
//! coefficient files hold one ragged tap block per row.
//!
//! Identifier state checkpoints are binary: the 7-byte magic `GSOID01`
//! followed by little-endian f64 values in this exact order:
//!
//! 1.  n, p_order, t
//! 2.  path (1 or 2), adjacency_only (0/1)
//! 3.  lambda, gamma, mu[1..=P]
//! 4.  weighted_energy, last_objective, armijo_floor_hits
//! 5.  buffer_len, then P slots of n entries each (newest first, unused
//!     slots zero-filled)
//! 6.  psi_plus, psi_minus (n × nP, row-major)
//! 7.  w_plus, w_minus (n × n)
//! 8.  lag_autocorr (nP × nP)
//! 9.  cross_corr (n × nP)
//! 10. commutator_grad_psi (n × nP), commutator_grad_w (n × n)

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path as FsPath;

use ndarray::{Array1, Array2};

use crate::error::{GsoError, Result};
use crate::identify::{HyperParams, Identifier, IdentifierState, Path, StepsizeController};
use crate::sim::ArCoefficients;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"GSOID01";

fn parse_err(path: &FsPath, reason: impl Into<String>) -> GsoError {
    GsoError::Parse { path: path.display().to_string(), reason: reason.into() }
}

/// 17 significant digits: round-trips every finite f64.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows<W: Write>(out: &mut W, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_full(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

fn read_rows(path: &FsPath) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|cell| cell.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(rows)
}

pub fn write_matrix_csv(path: impl AsRef<FsPath>, m: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_rows(&mut out, m.rows().into_iter().map(|r| r.to_vec()))?;
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<FsPath>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(parse_err(path, "ragged rows in matrix file"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|e| parse_err(path, e.to_string()))
}

/// One row per time step, one column per vertex.
pub fn write_signal_csv(path: impl AsRef<FsPath>, samples: &[Array1<f64>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_rows(&mut out, samples.iter().map(|r| r.to_vec()))?;
    out.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: impl AsRef<FsPath>) -> Result<Vec<Array1<f64>>> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(parse_err(path, "ragged rows in signal file"));
    }
    Ok(rows.into_iter().map(Array1::from_vec).collect())
}

/// One ragged row per lag block.
pub fn write_coeffs_csv(path: impl AsRef<FsPath>, coeffs: &ArCoefficients) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_rows(&mut out, coeffs.blocks().iter().cloned())?;
    out.flush()?;
    Ok(())
}

pub fn read_coeffs_csv(path: impl AsRef<FsPath>) -> Result<ArCoefficients> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    ArCoefficients::new(rows).map_err(|e| parse_err(path, e.to_string()))
}

struct FloatWriter<W: Write> {
    out: W,
}

impl<W: Write> FloatWriter<W> {
    fn put(&mut self, v: f64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn put_usize(&mut self, v: usize) -> Result<()> {
        self.put(v as f64)
    }

    fn put_matrix(&mut self, m: &Array2<f64>) -> Result<()> {
        for v in m.iter() {
            self.put(*v)?;
        }
        Ok(())
    }
}

struct FloatReader<R: Read> {
    inp: R,
    path: String,
}

impl<R: Read> FloatReader<R> {
    fn take(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.inp.read_exact(&mut buf).map_err(|e| GsoError::Parse {
            path: self.path.clone(),
            reason: format!("truncated checkpoint: {e}"),
        })?;
        Ok(f64::from_le_bytes(buf))
    }

    fn take_usize(&mut self, what: &str, max: usize) -> Result<usize> {
        let v = self.take()?;
        if !v.is_finite() || v < 0.0 || v.fract() != 0.0 || v > max as f64 {
            return Err(GsoError::Parse {
                path: self.path.clone(),
                reason: format!("{what} field holds invalid value {v}"),
            });
        }
        Ok(v as usize)
    }

    fn take_matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut m = Array2::<f64>::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                m[[i, j]] = self.take()?;
            }
        }
        Ok(m)
    }
}

/// Serialize the full identifier so the debias stage (or a continued
/// identification) can resume the recursions exactly.
pub fn save_checkpoint(path: impl AsRef<FsPath>, identifier: &Identifier) -> Result<()> {
    let st = identifier.state();
    let hp = identifier.hyper();
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let mut w = FloatWriter { out };
    w.put_usize(st.n)?;
    w.put_usize(st.p_order)?;
    w.put_usize(st.t)?;
    w.put(match hp.path {
        Path::One => 1.0,
        Path::Two => 2.0,
    })?;
    w.put(if identifier.adjacency_only() { 1.0 } else { 0.0 })?;
    w.put(hp.lambda)?;
    w.put(hp.gamma)?;
    for mu in &hp.mu {
        w.put(*mu)?;
    }
    w.put(st.weighted_energy)?;
    w.put(st.last_objective)?;
    w.put(st.armijo_floor_hits as f64)?;
    let lags: Vec<&Array1<f64>> = st.buffered_lags().collect();
    w.put_usize(lags.len())?;
    for slot in 0..st.p_order {
        for i in 0..st.n {
            w.put(lags.get(slot).map_or(0.0, |x| x[i]))?;
        }
    }
    w.put_matrix(&st.psi_plus)?;
    w.put_matrix(&st.psi_minus)?;
    w.put_matrix(&st.w_plus)?;
    w.put_matrix(&st.w_minus)?;
    w.put_matrix(&st.lag_autocorr)?;
    w.put_matrix(&st.cross_corr)?;
    w.put_matrix(&st.commutator_grad_psi)?;
    w.put_matrix(&st.commutator_grad_w)?;
    w.out.flush()?;
    Ok(())
}

/// Restore an identifier checkpoint; the stepsize controller is runtime
/// policy and is supplied by the caller.
pub fn load_checkpoint(path: impl AsRef<FsPath>, sc: StepsizeController) -> Result<Identifier> {
    let path = path.as_ref();
    let mut inp = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 7];
    inp.read_exact(&mut magic)
        .map_err(|e| parse_err(path, format!("missing magic header: {e}")))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(parse_err(path, "not a GSOID01 checkpoint"));
    }
    let mut r = FloatReader { inp, path: path.display().to_string() };
    const DIM_LIMIT: usize = 1 << 20;
    let n = r.take_usize("n", DIM_LIMIT)?;
    let p_order = r.take_usize("p_order", DIM_LIMIT)?;
    if n == 0 || p_order == 0 {
        return Err(parse_err(path, "checkpoint holds empty dimensions"));
    }
    let t = r.take_usize("t", usize::MAX >> 1)?;
    let path_tag = r.take()?;
    let alg_path = match path_tag {
        v if v == 1.0 => Path::One,
        v if v == 2.0 => Path::Two,
        v => return Err(parse_err(path, format!("unknown path tag {v}"))),
    };
    let adjacency_only = r.take()? != 0.0;
    let lambda = r.take()?;
    let gamma = r.take()?;
    let mut mu = Vec::with_capacity(p_order);
    for _ in 0..p_order {
        mu.push(r.take()?);
    }
    let weighted_energy = r.take()?;
    let last_objective = r.take()?;
    let armijo_floor_hits = r.take_usize("armijo_floor_hits", usize::MAX >> 1)? as u64;
    let buffer_len = r.take_usize("buffer_len", p_order)?;
    let mut lags = Vec::with_capacity(buffer_len);
    for slot in 0..p_order {
        let mut x = Array1::<f64>::zeros(n);
        for i in 0..n {
            x[i] = r.take()?;
        }
        if slot < buffer_len {
            lags.push(x);
        }
    }
    let np = n * p_order;
    let mut state = IdentifierState::zeros(n, p_order);
    state.t = t;
    state.weighted_energy = weighted_energy;
    state.last_objective = last_objective;
    state.armijo_floor_hits = armijo_floor_hits;
    state.set_buffer(lags);
    state.psi_plus = r.take_matrix(n, np)?;
    state.psi_minus = r.take_matrix(n, np)?;
    state.w_plus = r.take_matrix(n, n)?;
    state.w_minus = r.take_matrix(n, n)?;
    state.lag_autocorr = r.take_matrix(np, np)?;
    state.cross_corr = r.take_matrix(n, np)?;
    state.commutator_grad_psi = r.take_matrix(n, np)?;
    state.commutator_grad_w = r.take_matrix(n, n)?;

    let hp = HyperParams::new(mu, gamma, lambda, alg_path)
        .map_err(|e| parse_err(path, format!("checkpoint hyperparameters invalid: {e}")))?;
    Identifier::resume(state, hp, sc, adjacency_only)
}
