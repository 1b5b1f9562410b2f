//! Bits, QPSK symbols, hybrid weights and the received-signal model
//! `r = sqrt(P) W_BB^H W_RF^H H F_RF F_BB x + W_BB^H W_RF^H n`.

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, RngStream, C64};

/// Only QPSK is supported.
pub const QPSK: usize = 4;

/// `N_s x log2(M)` bit matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    n_s: usize,
    bits_per_symbol: usize,
    bits: Vec<u8>,
}

impl BitBlock {
    pub fn new(n_s: usize, bits_per_symbol: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != n_s * bits_per_symbol {
            return Err(Error::input(format!(
                "bit block {n_s}x{bits_per_symbol} needs {} bits, got {}",
                n_s * bits_per_symbol,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::input("bits must be 0 or 1"));
        }
        Ok(BitBlock {
            n_s,
            bits_per_symbol,
            bits,
        })
    }

    pub fn zeros(n_s: usize, bits_per_symbol: usize) -> Self {
        BitBlock {
            n_s,
            bits_per_symbol,
            bits: vec![0; n_s * bits_per_symbol],
        }
    }

    pub fn random(n_s: usize, bits_per_symbol: usize, stream: &mut RngStream) -> Self {
        BitBlock {
            n_s,
            bits_per_symbol,
            bits: (0..n_s * bits_per_symbol).map(|_| stream.bit()).collect(),
        }
    }

    /// Enumerates all `2^(n_s * bits_per_symbol)` blocks.
    pub fn all(n_s: usize, bits_per_symbol: usize) -> impl Iterator<Item = BitBlock> {
        let n = n_s * bits_per_symbol;
        (0u64..1 << n).map(move |w| BitBlock {
            n_s,
            bits_per_symbol,
            bits: (0..n).map(|i| ((w >> i) & 1) as u8).collect(),
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn get(&self, stream: usize, bit: usize) -> u8 {
        self.bits[stream * self.bits_per_symbol + bit]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Positions where `self` and `other` differ.
    pub fn hamming(&self, other: &BitBlock) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Transmit symbol vector, `E{x x^H} = I / N_s`.
pub type SymbolVector = Vec<C64>;

pub fn bits_per_symbol(m_order: usize) -> Result<usize> {
    match m_order {
        QPSK => Ok(2),
        other => Err(Error::Config(format!(
            "modulation order {other} unsupported (only M = 4)"
        ))),
    }
}

/// Gray QPSK: `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2 N_s)`.
pub fn modulate(bits: &BitBlock, m_order: usize) -> Result<SymbolVector> {
    let bps = bits_per_symbol(m_order)?;
    if bits.bits_per_symbol() != bps {
        return Err(Error::input(format!(
            "expected {bps} bits per symbol, block has {}",
            bits.bits_per_symbol()
        )));
    }
    let scale = 1.0 / (2.0 * bits.n_s() as f64).sqrt();
    Ok((0..bits.n_s())
        .map(|s| {
            let re = 1.0 - 2.0 * bits.get(s, 0) as f64;
            let im = 1.0 - 2.0 * bits.get(s, 1) as f64;
            C64::new(re * scale, im * scale)
        })
        .collect())
}

/// Sign decisions per rail; exactly zero decides bit 0.
pub fn demod_hard(x_hat: &[C64], m_order: usize) -> Result<BitBlock> {
    let bps = bits_per_symbol(m_order)?;
    let bits = x_hat
        .iter()
        .flat_map(|z| [(z.re < 0.0) as u8, (z.im < 0.0) as u8])
        .collect();
    BitBlock::new(x_hat.len(), bps, bits)
}

/// Transmit power for an SNR in dB with unit noise variance.
pub fn snr_to_power(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// The analog/digital precoder and combiner pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridWeights {
    /// `N_T x N_T^RF`, entries of modulus `1/sqrt(N_T)`.
    pub f_rf: CMatrix,
    /// `N_T^RF x N_s`, with `||F_RF F_BB||_F^2 = N_s`.
    pub f_bb: CMatrix,
    /// `N_R x N_R^RF`, entries of modulus `1/sqrt(N_R)`.
    pub w_rf: CMatrix,
    /// `N_R^RF x N_s`, unconstrained.
    pub w_bb: CMatrix,
}

/// Worst-case deviations from the hardware and power constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConstraintReport {
    pub f_rf_modulus_dev: f64,
    pub w_rf_modulus_dev: f64,
    pub power_dev: f64,
}

impl ConstraintReport {
    pub fn within(&self, modulus_tol: f64, power_tol: f64) -> bool {
        self.f_rf_modulus_dev <= modulus_tol
            && self.w_rf_modulus_dev <= modulus_tol
            && self.power_dev <= power_tol
    }

    pub fn merge(self, other: ConstraintReport) -> ConstraintReport {
        ConstraintReport {
            f_rf_modulus_dev: self.f_rf_modulus_dev.max(other.f_rf_modulus_dev),
            w_rf_modulus_dev: self.w_rf_modulus_dev.max(other.w_rf_modulus_dev),
            power_dev: self.power_dev.max(other.power_dev),
        }
    }
}

fn modulus_dev(m: &CMatrix) -> f64 {
    let target = 1.0 / (m.rows() as f64).sqrt();
    m.as_slice()
        .iter()
        .map(|z| (z.norm() - target).abs())
        .fold(0.0, f64::max)
}

impl HybridWeights {
    pub fn n_s(&self) -> usize {
        self.f_bb.cols()
    }

    pub fn constraints(&self) -> ConstraintReport {
        let n_s = self.n_s() as f64;
        ConstraintReport {
            f_rf_modulus_dev: modulus_dev(&self.f_rf),
            w_rf_modulus_dev: modulus_dev(&self.w_rf),
            power_dev: ((&self.f_rf * &self.f_bb).frob_norm_sqr() - n_s).abs(),
        }
    }

    /// Checks shapes against a channel.
    pub fn check_shapes(&self, h: &CMatrix) -> Result<()> {
        let (n_r, n_t) = h.shape();
        let ok = self.f_rf.rows() == n_t
            && self.f_bb.rows() == self.f_rf.cols()
            && self.w_rf.rows() == n_r
            && self.w_bb.rows() == self.w_rf.cols()
            && self.w_bb.cols() == self.f_bb.cols();
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!(
                "hybrid weights F_RF {:?} F_BB {:?} W_RF {:?} W_BB {:?} do not fit a {n_r}x{n_t} channel",
                self.f_rf.shape(),
                self.f_bb.shape(),
                self.w_rf.shape(),
                self.w_bb.shape()
            )))
        }
    }

    /// Full precoder `F_RF F_BB`.
    pub fn precoder(&self) -> CMatrix {
        &self.f_rf * &self.f_bb
    }

    /// Full combiner `W_RF W_BB`.
    pub fn combiner(&self) -> CMatrix {
        &self.w_rf * &self.w_bb
    }
}

/// Detected signal after the hybrid receiver.
pub fn transmit_receive(
    h: &CMatrix,
    w: &HybridWeights,
    x: &[C64],
    noise: &[C64],
    power: f64,
) -> Result<Vec<C64>> {
    w.check_shapes(h)?;
    if x.len() != w.n_s() || noise.len() != h.rows() {
        return Err(Error::input(format!(
            "symbol length {} / noise length {} do not match N_s={} / N_R={}",
            x.len(),
            noise.len(),
            w.n_s(),
            h.rows()
        )));
    }
    Ok(receive_chain(h, &w.f_rf, &w.f_bb, &w.w_rf, &w.w_bb, x, noise, power))
}

/// `r = W_BB^H W_RF^H (sqrt(P) H F_RF F_BB x + n)`, evaluated right to left.
pub(crate) fn receive_chain(
    h: &CMatrix,
    f_rf: &CMatrix,
    f_bb: &CMatrix,
    w_rf: &CMatrix,
    w_bb: &CMatrix,
    x: &[C64],
    noise: &[C64],
    power: f64,
) -> Vec<C64> {
    let t = f_bb.mul_vec(x).expect("checked shapes");
    let u = f_rf.mul_vec(&t).expect("checked shapes");
    let hu = h.mul_vec(&u).expect("checked shapes");
    let sp = power.sqrt();
    let y: Vec<C64> = hu.iter().zip(noise).map(|(a, n)| a * sp + n).collect();
    let z = w_rf.adjoint_mul_vec(&y).expect("checked shapes");
    w_bb.adjoint_mul_vec(&z).expect("checked shapes")
}

/// Received signal through an arbitrary linear precoder/combiner pair.
pub fn receive_linear(
    h: &CMatrix,
    precoder: &CMatrix,
    combiner: &CMatrix,
    x: &[C64],
    noise: &[C64],
    power: f64,
) -> Result<Vec<C64>> {
    let s = precoder.mul_vec(x)?;
    let hs = h.mul_vec(&s)?;
    if noise.len() != hs.len() {
        return Err(Error::input("noise length does not match N_R"));
    }
    let sp = power.sqrt();
    let y: Vec<C64> = hs.iter().zip(noise).map(|(a, n)| a * sp + n).collect();
    combiner.adjoint_mul_vec(&y)
}
