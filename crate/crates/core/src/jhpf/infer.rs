use ndarray::Array2;

use super::layers::stack_real_into;
use super::model::design_stage;
use super::FrameworkParams;
use crate::error::{Error, Result};
use crate::neural::Mode;
use crate::numerics::{CMatrix, C64};
use crate::phy::{transmit_receive, BitBlock, HybridWeights};

fn check_sets(fp: &FrameworkParams, channels: &[Vec<CMatrix>]) -> Result<()> {
    let k = fp.cfg.k_subcarriers;
    if let Some(bad) = channels.iter().find(|c| c.len() != k) {
        return Err(Error::Usage(format!(
            "channel has {} subcarriers, the parameters were built for K = {k}",
            bad.len()
        )));
    }
    Ok(())
}

/// Hybrid weights for each subcarrier of each channel realization. The analog pair of a
/// realization is computed once from its anchor subcarrier and shared by all subcarriers.
pub fn design(fp: &FrameworkParams, channels: &[Vec<CMatrix>]) -> Result<Vec<Vec<HybridWeights>>> {
    check_sets(fp, channels)?;
    let q = fp.cfg.anchor_subcarrier_q;
    let anchors: Vec<&CMatrix> = channels.iter().map(|c| &c[q]).collect();
    let data: Vec<(usize, &CMatrix)> = channels
        .iter()
        .enumerate()
        .flat_map(|(a, c)| c.iter().map(move |h| (a, h)))
        .collect();
    let tape = design_stage(fp, &anchors, &data, Mode::Infer)?;
    let k = fp.cfg.k_subcarriers;
    Ok((0..channels.len())
        .map(|a| (0..k).map(|i| tape.weights(a * k + i)).collect())
        .collect())
}

/// Like [`design`], but every subcarrier gets an analog pair matched to its own channel.
pub fn design_genie(fp: &FrameworkParams, channels: &[Vec<CMatrix>]) -> Result<Vec<Vec<HybridWeights>>> {
    check_sets(fp, channels)?;
    let anchors: Vec<&CMatrix> = channels.iter().flatten().collect();
    let data: Vec<(usize, &CMatrix)> = anchors.iter().copied().enumerate().collect();
    let tape = design_stage(fp, &anchors, &data, Mode::Infer)?;
    let k = fp.cfg.k_subcarriers;
    Ok((0..channels.len())
        .map(|a| (0..k).map(|i| tape.weights(a * k + i)).collect())
        .collect())
}

/// Demodulator decisions: a bit is 1 when its probability reaches one half.
pub fn detect(fp: &FrameworkParams, received: &[Vec<C64>]) -> Result<Vec<BitBlock>> {
    let cfg = &fp.cfg;
    if received.is_empty() {
        return Ok(Vec::new());
    }
    let mut flat = Vec::with_capacity(received.len() * 2 * cfg.n_s);
    for r in received {
        if r.len() != cfg.n_s {
            return Err(Error::input(format!(
                "received vector has length {}, expected N_s = {}",
                r.len(),
                cfg.n_s
            )));
        }
        stack_real_into(r, &mut flat);
    }
    let input = Array2::from_shape_vec((received.len(), 2 * cfg.n_s), flat).expect("sizes checked");
    let probs = fp.demod.predict(input.view())?;
    probs
        .rows()
        .into_iter()
        .map(|row| {
            BitBlock::new(
                cfg.n_s,
                cfg.bits_per_symbol(),
                row.iter().map(|&p| (p >= 0.5) as u8).collect(),
            )
        })
        .collect()
}

/// Recovered bits per subcarrier for one channel realization.
pub fn infer(
    fp: &FrameworkParams,
    h_set: &[CMatrix],
    bits: &[BitBlock],
    noise: &[Vec<C64>],
    power: f64,
) -> Result<Vec<BitBlock>> {
    let k = fp.cfg.k_subcarriers;
    if bits.len() != k || noise.len() != k {
        return Err(Error::Usage(format!(
            "need bits and noise for each of the K = {k} subcarriers"
        )));
    }
    let weights = design(fp, &[h_set.to_vec()])?.pop().expect("one realization");
    let received = weights
        .iter()
        .zip(h_set)
        .zip(bits.iter().zip(noise))
        .map(|((w, h), (b, n))| {
            let x = crate::phy::modulate(b, fp.cfg.m_order)?;
            transmit_receive(h, w, &x, n, power)
        })
        .collect::<Result<Vec<_>>>()?;
    detect(fp, &received)
}
