//! The fixed (parameter-free) layers between the networks.

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, C64};

/// Row-major real parts followed by row-major imaginary parts.
pub fn stack_real(a: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * a.as_slice().len());
    stack_real_into(a.as_slice(), &mut out);
    out
}

pub(crate) fn stack_real_into(values: &[C64], out: &mut Vec<f64>) {
    out.extend(values.iter().map(|z| z.re));
    out.extend(values.iter().map(|z| z.im));
}

/// Inverse of [`stack_real`].
pub fn unstack_real(v: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    let n = rows * cols;
    if v.len() != 2 * n {
        return Err(Error::input(format!(
            "cannot unstack {} reals into a {rows}x{cols} complex matrix",
            v.len()
        )));
    }
    CMatrix::from_vec(rows, cols, (0..n).map(|i| C64::new(v[i], v[n + i])).collect())
}

/// Unit-modulus analog matrix `(1/sqrt(n_ant)) exp(j phi)`, filled column by column
/// (`phi[j * n_ant + i]` lands at row `i`, column `j`).
pub fn phases_to_analog(phi: &[f64], n_ant: usize, n_rf: usize) -> Result<CMatrix> {
    if phi.len() != n_ant * n_rf {
        return Err(Error::input(format!(
            "expected {} phases for a {n_ant}x{n_rf} analog matrix, got {}",
            n_ant * n_rf,
            phi.len()
        )));
    }
    let amp = 1.0 / (n_ant as f64).sqrt();
    Ok(CMatrix::from_fn(n_ant, n_rf, |i, j| {
        C64::from_polar(amp, phi[j * n_ant + i])
    }))
}

/// `W_RF^H H F_RF`.
pub fn equivalent_channel(w_rf: &CMatrix, h: &CMatrix, f_rf: &CMatrix) -> Result<CMatrix> {
    w_rf.adjoint_mul(&h.matmul(f_rf)?)
}

/// Scale factor `sqrt(N_s) / ||F_RF F_bar||_F` and the composite `F_RF F_bar`.
pub(crate) fn precoder_scale(f_rf: &CMatrix, f_bb_raw: &CMatrix, n_s: usize) -> Result<(f64, CMatrix)> {
    let composite = f_rf.matmul(f_bb_raw)?;
    let norm = composite.frob_norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(format!(
            "composite precoder norm is {norm}; the digital precoder output is zero or not finite"
        )));
    }
    Ok(((n_s as f64).sqrt() / norm, composite))
}

/// Digital precoder rescaled so that `||F_RF F_BB||_F^2 = N_s`.
pub fn normalize_precoder(f_rf: &CMatrix, f_bb_raw: &CMatrix, n_s: usize) -> Result<CMatrix> {
    if f_bb_raw.cols() != n_s {
        return Err(Error::input(format!(
            "digital precoder has {} columns, expected N_s = {n_s}",
            f_bb_raw.cols()
        )));
    }
    let (s, _) = precoder_scale(f_rf, f_bb_raw, n_s)?;
    Ok(f_bb_raw.scale(s))
}
