//! Classical reference schemes: fully-digital SVD transmission, DFT-codebook beam sweeping
//! with an SVD digital stage, and random analog phases as a control.

use crate::error::{Error, Result};
use crate::jhpf::{equivalent_channel, normalize_precoder, phases_to_analog, SystemConfig};
use crate::numerics::{svd_compact, CMatrix, RngStream, C64};
use crate::phy::{demod_hard, BitBlock, HybridWeights};

/// Orthogonal DFT beams `exp(-j 2 pi m i / N) / sqrt(N)`, one per column. Column `m` is the
/// half-wavelength array response whose electrical angle `pi sin(theta)` equals `2 pi m / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftCodebook {
    pub columns: CMatrix,
}

impl DftCodebook {
    pub fn new(n: usize) -> Self {
        let amp = 1.0 / (n as f64).sqrt();
        DftCodebook {
            columns: CMatrix::from_fn(n, n, |i, m| {
                C64::from_polar(amp, -2.0 * std::f64::consts::PI * (m * i % n) as f64 / n as f64)
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Arrival/departure angle of codeword `m` for half-wavelength spacing.
    pub fn angle(&self, m: usize) -> f64 {
        let n = self.len() as f64;
        let mut e = 2.0 * m as f64 / n;
        if e >= 1.0 {
            e -= 2.0;
        }
        e.asin()
    }
}

/// A linear precoder/combiner pair with per-stream receive gains.
#[derive(Debug, Clone, PartialEq)]
pub struct FullyDigital {
    /// `N_T x N_s`, orthonormal columns (so `||F||_F^2 = N_s`).
    pub precoder: CMatrix,
    /// `N_R x N_s`, orthonormal columns.
    pub combiner: CMatrix,
    /// Leading singular values of the design channel.
    pub singular_values: Vec<f64>,
    /// Set when the channel has fewer than `N_s` usable singular values.
    pub rank_deficient: bool,
}

/// Top-`n_s` singular vectors of `h`.
pub fn fully_digital(h: &CMatrix, n_s: usize) -> Result<FullyDigital> {
    let (n_r, n_t) = h.shape();
    if n_s == 0 || n_s > n_r.min(n_t) {
        return Err(Error::input(format!(
            "cannot send {n_s} streams over a {n_r}x{n_t} channel"
        )));
    }
    let svd = svd_compact(h);
    let tol = 1e-12 * svd.s.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    Ok(FullyDigital {
        precoder: svd.v.leading_columns(n_s),
        combiner: svd.u.leading_columns(n_s),
        singular_values: svd.s[..n_s].to_vec(),
        rank_deficient: svd.rank(tol) < n_s,
    })
}

/// Per-stream complex gains `sqrt(P) diag(W^H H F)` used for scalar equalization.
pub fn stream_gains(h: &CMatrix, precoder: &CMatrix, combiner: &CMatrix, power: f64) -> Result<Vec<C64>> {
    let eff = combiner.adjoint_mul(&h.matmul(precoder)?)?;
    let sp = power.sqrt();
    Ok((0..eff.rows().min(eff.cols())).map(|s| eff[(s, s)] * sp).collect())
}

/// Divides each stream by its gain and slices the result. A zero gain leaves the stream
/// untouched.
pub fn equalize_detect(r: &[C64], gains: &[C64], m_order: usize) -> Result<BitBlock> {
    if r.len() != gains.len() {
        return Err(Error::input("one gain per stream required"));
    }
    let x: Vec<C64> = r
        .iter()
        .zip(gains)
        .map(|(v, g)| if g.norm_sqr() > 0.0 { v / g } else { *v })
        .collect();
    demod_hard(&x, m_order)
}

/// SVD digital stage on `W_RF^H H F_RF`, with the precoder rescaled to the power budget.
pub fn digital_stage(h: &CMatrix, f_rf: CMatrix, w_rf: CMatrix, n_s: usize) -> Result<HybridWeights> {
    let heq = equivalent_channel(&w_rf, h, &f_rf)?;
    let fd = fully_digital(&heq, n_s)?;
    let f_bb = normalize_precoder(&f_rf, &fd.precoder, n_s)?;
    Ok(HybridWeights {
        f_rf,
        f_bb,
        w_rf,
        w_bb: fd.combiner,
    })
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Beam indices `(receive, transmit)` chosen by the sweep. The objective
/// `||W_RF^H H F_RF||_F^2` is a sum of per-pair gains, so each half of the selection is
/// optimal given the other; the sweep starts from the strongest pair and alternates until
/// neither side changes.
pub fn beam_sweep_indices(h: &CMatrix, cfg: &SystemConfig, tx: &DftCodebook, rx: &DftCodebook) -> Result<(Vec<usize>, Vec<usize>)> {
    if h.shape() != (cfg.n_r, cfg.n_t) || tx.len() != cfg.n_t || rx.len() != cfg.n_r {
        return Err(Error::input("codebooks and channel must match the system dimensions"));
    }
    let gains = rx.columns.adjoint_mul(&h.matmul(&tx.columns)?)?;
    let score = |a: usize, b: usize| gains[(a, b)].norm_sqr();
    let (mut best, mut a0, mut b0) = (-1.0, 0, 0);
    for a in 0..cfg.n_r {
        for b in 0..cfg.n_t {
            if score(a, b) > best {
                best = score(a, b);
                (a0, b0) = (a, b);
            }
        }
    }
    let mut rx_sel = vec![a0];
    let mut tx_sel = top_k(&(0..cfg.n_t).map(|b| score(a0, b)).collect::<Vec<_>>(), cfg.n_t_rf);
    debug_assert_eq!(tx_sel[0], b0);
    for _ in 0..2 * (cfg.n_t + cfg.n_r) {
        let row: Vec<f64> = (0..cfg.n_r).map(|a| tx_sel.iter().map(|&b| score(a, b)).sum()).collect();
        let new_rx = top_k(&row, cfg.n_r_rf);
        let col: Vec<f64> = (0..cfg.n_t).map(|b| new_rx.iter().map(|&a| score(a, b)).sum()).collect();
        let new_tx = top_k(&col, cfg.n_t_rf);
        let done = new_rx == rx_sel && new_tx == tx_sel;
        rx_sel = new_rx;
        tx_sel = new_tx;
        if done {
            break;
        }
    }
    Ok((rx_sel, tx_sel))
}

/// Selected codewords as `(F_RF, W_RF)`.
pub fn beam_sweep_analog(h: &CMatrix, cfg: &SystemConfig, tx: &DftCodebook, rx: &DftCodebook) -> Result<(CMatrix, CMatrix)> {
    let (rx_sel, tx_sel) = beam_sweep_indices(h, cfg, tx, rx)?;
    Ok((tx.columns.select_columns(&tx_sel), rx.columns.select_columns(&rx_sel)))
}

/// Codebook analog stage plus SVD digital stage.
pub fn beam_sweep(h: &CMatrix, cfg: &SystemConfig, tx: &DftCodebook, rx: &DftCodebook) -> Result<HybridWeights> {
    let (f_rf, w_rf) = beam_sweep_analog(h, cfg, tx, rx)?;
    digital_stage(h, f_rf, w_rf, cfg.n_s)
}

/// Uniformly random `(F_RF, W_RF)`.
pub fn random_analog(cfg: &SystemConfig, stream: &mut RngStream) -> Result<(CMatrix, CMatrix)> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let pt: Vec<f64> = (0..cfg.n_t * cfg.n_t_rf).map(|_| two_pi * stream.uniform()).collect();
    let pr: Vec<f64> = (0..cfg.n_r * cfg.n_r_rf).map(|_| two_pi * stream.uniform()).collect();
    Ok((
        phases_to_analog(&pt, cfg.n_t, cfg.n_t_rf)?,
        phases_to_analog(&pr, cfg.n_r, cfg.n_r_rf)?,
    ))
}

/// Uniformly random analog phases plus SVD digital stage.
pub fn random_phase(h: &CMatrix, cfg: &SystemConfig, stream: &mut RngStream) -> Result<HybridWeights> {
    let (f_rf, w_rf) = random_analog(cfg, stream)?;
    digital_stage(h, f_rf, w_rf, cfg.n_s)
}
