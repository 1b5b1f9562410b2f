//! Batched forward pass and hand-written reverse sweep of the whole framework.
//!
//! Complex adjoints follow the convention `G = dL/d(re) + j dL/d(im)`. With it, `C = A B`
//! back-propagates as `G_A = G_C B^H`, `G_B = A^H G_C`, and a unit-modulus entry
//! `F = c exp(j phi)` yields `dL/dphi = Im(G_F conj(F))`.

use ndarray::{Array2, ArrayView1};

use super::layers::{phases_to_analog, precoder_scale, stack_real_into};
use super::FrameworkParams;
use crate::error::{Error, Result};
use crate::neural::{bce_grad, bce_loss, MlpTape, Mode, NetGrads};
use crate::numerics::{CMatrix, C64};
use crate::phy::{modulate, BitBlock, HybridWeights};

/// One training tuple: the channel that drives the analog stage, the channel the data
/// travels over (the same matrix for narrowband links), the transmitted bits and the
/// receiver noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub h_anchor: CMatrix,
    pub h_data: CMatrix,
    pub subcarrier: usize,
    pub bits: BitBlock,
    pub noise: Vec<C64>,
}

impl TrainingSample {
    pub fn narrowband(h: CMatrix, bits: BitBlock, noise: Vec<C64>) -> Self {
        TrainingSample {
            h_anchor: h.clone(),
            h_data: h,
            subcarrier: 0,
            bits,
            noise,
        }
    }

    /// Subcarrier `i` of `h_set`, with the analog stage driven by subcarrier `q`.
    pub fn ofdm(h_set: &[CMatrix], q: usize, i: usize, bits: BitBlock, noise: Vec<C64>) -> Result<Self> {
        if q >= h_set.len() || i >= h_set.len() {
            return Err(Error::input(format!(
                "subcarriers q={q}, i={i} outside 0..{}",
                h_set.len()
            )));
        }
        Ok(TrainingSample {
            h_anchor: h_set[q].clone(),
            h_data: h_set[i].clone(),
            subcarrier: i,
            bits,
            noise,
        })
    }
}

/// Per-design intermediates of the analog and digital stages.
pub(crate) struct DesignRecord {
    pub analog: usize,
    pub h: CMatrix,
    /// `H F_RF`.
    pub m: CMatrix,
    pub f_bar: CMatrix,
    /// `F_RF F_bar`.
    pub composite: CMatrix,
    pub norm: f64,
    pub scale: f64,
    pub f_bb: CMatrix,
    pub w_bb: CMatrix,
}

pub(crate) struct DesignTape {
    pub pp: MlpTape,
    pub cp: MlpTape,
    pub re_dp: MlpTape,
    pub im_dp: MlpTape,
    pub re_dc: MlpTape,
    pub im_dc: MlpTape,
    /// `(F_RF, W_RF)` per anchor channel.
    pub analog: Vec<(CMatrix, CMatrix)>,
    pub records: Vec<DesignRecord>,
}

impl DesignTape {
    pub fn weights(&self, k: usize) -> HybridWeights {
        let rec = &self.records[k];
        let (f_rf, w_rf) = &self.analog[rec.analog];
        HybridWeights {
            f_rf: f_rf.clone(),
            f_bb: rec.f_bb.clone(),
            w_rf: w_rf.clone(),
            w_bb: rec.w_bb.clone(),
        }
    }
}

fn check_channel(h: &CMatrix, n_r: usize, n_t: usize) -> Result<()> {
    if h.shape() != (n_r, n_t) {
        return Err(Error::input(format!(
            "channel is {:?}, the system expects {n_r}x{n_t}",
            h.shape()
        )));
    }
    Ok(())
}

fn complex_from_parts(re: ArrayView1<f64>, im: ArrayView1<f64>, rows: usize, cols: usize) -> CMatrix {
    let v: Vec<C64> = re.iter().zip(im.iter()).map(|(&a, &b)| C64::new(a, b)).collect();
    CMatrix::from_col_major(rows, cols, &v).expect("network output size fixed by spec")
}

/// Runs the analog networks on `anchors` and the digital networks on each
/// `(anchor index, channel)` pair.
pub(crate) fn design_stage(
    fp: &FrameworkParams,
    anchors: &[&CMatrix],
    data: &[(usize, &CMatrix)],
    mode: Mode,
) -> Result<DesignTape> {
    let cfg = &fp.cfg;
    if anchors.is_empty() || data.is_empty() {
        return Err(Error::input("empty batch"));
    }
    for h in anchors {
        check_channel(h, cfg.n_r, cfg.n_t)?;
    }
    let mut flat = Vec::with_capacity(anchors.len() * 2 * cfg.n_t * cfg.n_r);
    for h in anchors {
        stack_real_into(h.as_slice(), &mut flat);
    }
    let x_in = Array2::from_shape_vec((anchors.len(), 2 * cfg.n_t * cfg.n_r), flat)
        .expect("sizes computed above");
    let pp = fp.pp.forward(x_in.view(), mode)?;
    let cp = fp.cp.forward(x_in.view(), mode)?;
    let analog = pp
        .output()
        .rows()
        .into_iter()
        .zip(cp.output().rows())
        .map(|(pt, pr)| {
            Ok((
                phases_to_analog(pt.as_slice().expect("row-major"), cfg.n_t, cfg.n_t_rf)?,
                phases_to_analog(pr.as_slice().expect("row-major"), cfg.n_r, cfg.n_r_rf)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let eq_in = 2 * cfg.n_t_rf * cfg.n_r_rf;
    let mut flat = Vec::with_capacity(data.len() * eq_in);
    let mut partial = Vec::with_capacity(data.len());
    for &(a, h) in data {
        check_channel(h, cfg.n_r, cfg.n_t)?;
        let (f_rf, w_rf) = analog
            .get(a)
            .ok_or_else(|| Error::input(format!("anchor index {a} out of range")))?;
        let m = h.mul_unchecked(f_rf);
        let heq = w_rf.adjoint_mul(&m)?;
        stack_real_into(heq.as_slice(), &mut flat);
        partial.push((a, h.clone(), m));
    }
    let x_eq = Array2::from_shape_vec((data.len(), eq_in), flat).expect("sizes computed above");
    let re_dp = fp.re_dp.forward(x_eq.view(), mode)?;
    let im_dp = fp.im_dp.forward(x_eq.view(), mode)?;
    let re_dc = fp.re_dc.forward(x_eq.view(), mode)?;
    let im_dc = fp.im_dc.forward(x_eq.view(), mode)?;

    let mut records = Vec::with_capacity(data.len());
    for (k, (a, h, m)) in partial.into_iter().enumerate() {
        let f_bar = complex_from_parts(re_dp.output().row(k), im_dp.output().row(k), cfg.n_t_rf, cfg.n_s);
        let w_bb = complex_from_parts(re_dc.output().row(k), im_dc.output().row(k), cfg.n_r_rf, cfg.n_s);
        let (scale, composite) = precoder_scale(&analog[a].0, &f_bar, cfg.n_s)?;
        records.push(DesignRecord {
            analog: a,
            h,
            m,
            f_bb: f_bar.scale(scale),
            norm: composite.frob_norm(),
            f_bar,
            composite,
            scale,
            w_bb,
        });
    }
    Ok(DesignTape {
        pp,
        cp,
        re_dp,
        im_dp,
        re_dc,
        im_dc,
        analog,
        records,
    })
}

/// Signal-flow intermediates of one sample.
pub(crate) struct SignalRecord {
    pub x: Vec<C64>,
    pub t: Vec<C64>,
    pub y: Vec<C64>,
    pub z: Vec<C64>,
}

/// Everything the reverse sweep needs.
pub struct JhpfTape {
    pub(crate) design: DesignTape,
    pub(crate) signals: Vec<SignalRecord>,
    pub(crate) demod: MlpTape,
    pub(crate) targets: Array2<f64>,
    pub(crate) power: f64,
}

impl JhpfTape {
    pub fn batch_size(&self) -> usize {
        self.signals.len()
    }

    pub fn mode(&self) -> Mode {
        self.demod.mode()
    }
}

pub struct ForwardOutput {
    /// `batch x (N_s log2 M)` bit probabilities.
    pub probs: Array2<f64>,
    pub loss: f64,
    pub weights: Vec<HybridWeights>,
    /// Received vectors `r` before the demodulator.
    pub received: Vec<Vec<C64>>,
    pub tape: JhpfTape,
}

/// Full pipeline on a batch at transmit power `power` (unit noise variance).
pub fn forward(fp: &FrameworkParams, samples: &[TrainingSample], power: f64, mode: Mode) -> Result<ForwardOutput> {
    let cfg = &fp.cfg;
    for s in samples {
        check_channel(&s.h_data, cfg.n_r, cfg.n_t)?;
        if s.bits.n_s() != cfg.n_s || s.bits.bits_per_symbol() != cfg.bits_per_symbol() {
            return Err(Error::input(format!(
                "bit block is {}x{}, the system expects {}x{}",
                s.bits.n_s(),
                s.bits.bits_per_symbol(),
                cfg.n_s,
                cfg.bits_per_symbol()
            )));
        }
        if s.noise.len() != cfg.n_r {
            return Err(Error::input(format!(
                "noise has length {}, expected N_R = {}",
                s.noise.len(),
                cfg.n_r
            )));
        }
    }
    let anchors: Vec<&CMatrix> = samples.iter().map(|s| &s.h_anchor).collect();
    let data: Vec<(usize, &CMatrix)> = samples.iter().enumerate().map(|(i, s)| (i, &s.h_data)).collect();
    let design = design_stage(fp, &anchors, &data, mode)?;

    let sp = power.sqrt();
    let mut signals = Vec::with_capacity(samples.len());
    let mut received = Vec::with_capacity(samples.len());
    let mut flat = Vec::with_capacity(samples.len() * 2 * cfg.n_s);
    for (s, rec) in samples.iter().zip(&design.records) {
        let (f_rf, w_rf) = &design.analog[rec.analog];
        let x = modulate(&s.bits, cfg.m_order)?;
        let t = rec.f_bb.mul_vec(&x)?;
        let u = f_rf.mul_vec(&t)?;
        let hu = rec.h.mul_vec(&u)?;
        let y: Vec<C64> = hu.iter().zip(&s.noise).map(|(a, n)| a * sp + n).collect();
        let z = w_rf.adjoint_mul_vec(&y)?;
        let r = rec.w_bb.adjoint_mul_vec(&z)?;
        stack_real_into(&r, &mut flat);
        received.push(r);
        signals.push(SignalRecord { x, t, y, z });
    }
    let r_in = Array2::from_shape_vec((samples.len(), 2 * cfg.n_s), flat).expect("sizes computed above");
    let demod = fp.demod.forward(r_in.view(), mode)?;
    let probs = demod.output().clone();
    let flat_bits: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.bits.as_slice().iter().map(|&b| b as f64))
        .collect();
    let targets = Array2::from_shape_vec(probs.raw_dim(), flat_bits).expect("bit count fixed by spec");
    let loss = bce_loss(&targets, &probs)?;
    let weights = (0..samples.len()).map(|k| design.weights(k)).collect();
    Ok(ForwardOutput {
        probs,
        loss,
        weights,
        received,
        tape: JhpfTape {
            design,
            signals,
            demod,
            targets,
            power,
        },
    })
}

/// Gradients for the seven networks in [`super::NET_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkGrads {
    pub nets: Vec<NetGrads>,
}

impl FrameworkGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.nets.iter().flat_map(|n| n.tensors()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.nets.iter().map(NetGrads::max_abs).fold(0.0, f64::max)
    }
}

/// Adjoints at the boundaries between the networks and the fixed layers, kept for the
/// closed-form checks.
pub(crate) struct Trace {
    /// `dL/dr` per sample.
    pub g_r: Vec<Vec<C64>>,
    /// Total adjoint of `F_RF` and `W_RF` per sample.
    pub g_f_rf: Vec<CMatrix>,
    pub g_w_rf: Vec<CMatrix>,
    /// Gradients handed to the network outputs.
    pub g_phi_t: Array2<f64>,
    pub g_phi_r: Array2<f64>,
    pub g_re_dc: Array2<f64>,
    pub g_im_dc: Array2<f64>,
}

fn outer_conj(a: &[C64], b: &[C64]) -> CMatrix {
    CMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

fn write_col_major(dst_re: &mut [f64], dst_im: &mut [f64], g: &CMatrix) {
    for (k, z) in g.to_col_major().into_iter().enumerate() {
        dst_re[k] = z.re;
        dst_im[k] = z.im;
    }
}

/// Exact gradient of the batch BCE recorded on `tape`.
pub fn backward(fp: &FrameworkParams, tape: &JhpfTape) -> Result<FrameworkGrads> {
    backward_traced(fp, tape).map(|(g, _)| g)
}

pub(crate) fn backward_traced(fp: &FrameworkParams, tape: &JhpfTape) -> Result<(FrameworkGrads, Trace)> {
    let cfg = &fp.cfg;
    let d = &tape.design;
    let b = tape.signals.len();
    let n_s = cfg.n_s;
    let g_probs = bce_grad(&tape.targets, tape.demod.output())?;
    let (g_demod, g_rin) = fp.demod.backward(&tape.demod, g_probs.view())?;

    let sp = tape.power.sqrt();
    let mut g_re_dp = Array2::zeros((b, cfg.n_t_rf * n_s));
    let mut g_im_dp = Array2::zeros((b, cfg.n_t_rf * n_s));
    let mut g_re_dc = Array2::zeros((b, cfg.n_r_rf * n_s));
    let mut g_im_dc = Array2::zeros((b, cfg.n_r_rf * n_s));
    let mut g_f_rf = Vec::with_capacity(b);
    let mut g_w_rf = Vec::with_capacity(b);
    let mut g_r_all = Vec::with_capacity(b);
    for (k, (rec, sig)) in d.records.iter().zip(&tape.signals).enumerate() {
        let (f_rf, w_rf) = &d.analog[rec.analog];
        let g_r: Vec<C64> = (0..n_s).map(|s| C64::new(g_rin[[k, s]], g_rin[[k, n_s + s]])).collect();
        // r = W_BB^H z
        let g_wbb = outer_conj(&sig.z, &g_r);
        let g_z = rec.w_bb.mul_vec(&g_r)?;
        // z = W_RF^H y
        let g_wrf = outer_conj(&sig.y, &g_z);
        let g_y = w_rf.mul_vec(&g_z)?;
        // y = sqrt(P) H u + n, u = F_RF t, t = F_BB x
        let g_u: Vec<C64> = rec.h.adjoint_mul_vec(&g_y)?.into_iter().map(|v| v * sp).collect();
        let mut g_frf = outer_conj(&g_u, &sig.t);
        let g_t = f_rf.adjoint_mul_vec(&g_u)?;
        let g_fbb = outer_conj(&g_t, &sig.x);
        // F_BB = s F_bar with s = sqrt(N_s) / ||F_RF F_bar||
        let dl_ds: f64 = g_fbb
            .as_slice()
            .iter()
            .zip(rec.f_bar.as_slice())
            .map(|(g, f)| (g.conj() * f).re)
            .sum();
        let dl_dn = -dl_ds * rec.scale / rec.norm;
        let g_a = rec.composite.scale(dl_dn / rec.norm);
        let mut g_fbar = g_fbb.scale(rec.scale);
        g_fbar.add_assign(&f_rf.adjoint_mul(&g_a)?);
        g_frf.add_assign(&g_a.matmul(&rec.f_bar.adjoint())?);

        write_col_major(
            g_re_dp.row_mut(k).into_slice().expect("row-major"),
            g_im_dp.row_mut(k).into_slice().expect("row-major"),
            &g_fbar,
        );
        write_col_major(
            g_re_dc.row_mut(k).into_slice().expect("row-major"),
            g_im_dc.row_mut(k).into_slice().expect("row-major"),
            &g_wbb,
        );
        g_f_rf.push(g_frf);
        g_w_rf.push(g_wrf);
        g_r_all.push(g_r);
    }

    let (g_nre_dp, gx1) = fp.re_dp.backward(&d.re_dp, g_re_dp.view())?;
    let (g_nim_dp, gx2) = fp.im_dp.backward(&d.im_dp, g_im_dp.view())?;
    let (g_nre_dc, gx3) = fp.re_dc.backward(&d.re_dc, g_re_dc.view())?;
    let (g_nim_dc, gx4) = fp.im_dc.backward(&d.im_dc, g_im_dc.view())?;
    let g_xeq = gx1 + gx2 + gx3 + gx4;

    // H_eq = W_RF^H M with M = H F_RF
    let n_eq = cfg.n_r_rf * cfg.n_t_rf;
    let n_anchor = d.analog.len();
    let mut g_f_rf_anchor = vec![CMatrix::zeros(cfg.n_t, cfg.n_t_rf); n_anchor];
    let mut g_w_rf_anchor = vec![CMatrix::zeros(cfg.n_r, cfg.n_r_rf); n_anchor];
    for (k, rec) in d.records.iter().enumerate() {
        let (_, w_rf) = &d.analog[rec.analog];
        let row = g_xeq.row(k);
        let g_heq = CMatrix::from_fn(cfg.n_r_rf, cfg.n_t_rf, |i, j| {
            let idx = i * cfg.n_t_rf + j;
            C64::new(row[idx], row[n_eq + idx])
        });
        g_w_rf[k].add_assign(&rec.m.matmul(&g_heq.adjoint())?);
        let g_m = w_rf.matmul(&g_heq)?;
        g_f_rf[k].add_assign(&rec.h.adjoint_mul(&g_m)?);
        g_f_rf_anchor[rec.analog].add_assign(&g_f_rf[k]);
        g_w_rf_anchor[rec.analog].add_assign(&g_w_rf[k]);
    }

    let mut g_phi_t = Array2::zeros((n_anchor, cfg.n_t * cfg.n_t_rf));
    let mut g_phi_r = Array2::zeros((n_anchor, cfg.n_r * cfg.n_r_rf));
    for (a, (f_rf, w_rf)) in d.analog.iter().enumerate() {
        phase_grad(&g_f_rf_anchor[a], f_rf, g_phi_t.row_mut(a).into_slice().expect("row-major"));
        phase_grad(&g_w_rf_anchor[a], w_rf, g_phi_r.row_mut(a).into_slice().expect("row-major"));
    }
    let (g_pp, _) = fp.pp.backward(&d.pp, g_phi_t.view())?;
    let (g_cp, _) = fp.cp.backward(&d.cp, g_phi_r.view())?;

    Ok((
        FrameworkGrads {
            nets: vec![g_pp, g_cp, g_nre_dp, g_nim_dp, g_nre_dc, g_nim_dc, g_demod],
        },
        Trace {
            g_r: g_r_all,
            g_f_rf,
            g_w_rf,
            g_phi_t,
            g_phi_r,
            g_re_dc,
            g_im_dc,
        },
    ))
}

/// `dL/dphi = Im(G conj(F))`, written in the column-major phase order.
fn phase_grad(g: &CMatrix, f: &CMatrix, out: &mut [f64]) {
    let n = f.rows();
    for j in 0..f.cols() {
        for i in 0..n {
            out[j * n + i] = (g[(i, j)] * f[(i, j)].conj()).im;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jhpf::gradcheck::random_instance;
    use crate::jhpf::SystemConfig;
    use crate::neural::Activation;
    use crate::numerics::RngStream;
    use std::f64::consts::PI;

    fn cfg() -> SystemConfig {
        SystemConfig::narrowband(8, 4, 2, 2, 2)
    }

    #[test]
    fn output_shape_range_and_constraints() {
        let (fp, samples) = random_instance(&cfg(), 1, 6).unwrap();
        for mode in [Mode::Train, Mode::Infer] {
            let out = forward(&fp, &samples, 10.0, mode).unwrap();
            assert_eq!(out.probs.dim(), (6, 4));
            assert!(out.probs.iter().all(|p| (0.0..=1.0).contains(p)));
            for w in &out.weights {
                assert!(w.constraints().within(1e-12, 1e-9), "{:?}", w.constraints());
            }
        }
    }

    #[test]
    fn phase_offsets_of_two_pi_are_invisible() {
        let cfg = cfg();
        let mut fp = FrameworkParams::init(&cfg, Activation::Linear, &mut RngStream::new(2, 0)).unwrap();
        let (_, samples) = random_instance(&cfg, 2, 5).unwrap();
        let base = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        for net in [&mut fp.pp, &mut fp.cp] {
            let last = net.dense.last_mut().unwrap();
            last.bias.mapv_inplace(|b| b + 2.0 * PI);
        }
        let shifted = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        let gap = base
            .probs
            .iter()
            .zip(shifted.probs.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap < 1e-10, "gap {gap}");
    }

    #[test]
    fn digital_precoder_scale_is_invisible() {
        let (mut fp, samples) = random_instance(&cfg(), 3, 5).unwrap();
        let base = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        for net in [&mut fp.re_dp, &mut fp.im_dp] {
            let last = net.dense.last_mut().unwrap();
            last.weight.mapv_inplace(|w| w * 7.0);
            last.bias.mapv_inplace(|b| b * 7.0);
        }
        let scaled = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        assert!((base.loss - scaled.loss).abs() < 1e-12);
        for (a, b) in base.weights.iter().zip(&scaled.weights) {
            assert!(a.f_bb.max_abs_diff(&b.f_bb) < 1e-12);
        }
    }

    #[test]
    fn narrowband_equals_ofdm_with_single_subcarrier() {
        let (fp, samples) = random_instance(&cfg(), 4, 4).unwrap();
        let ofdm: Vec<TrainingSample> = samples
            .iter()
            .map(|s| {
                TrainingSample::ofdm(std::slice::from_ref(&s.h_data), 0, 0, s.bits.clone(), s.noise.clone()).unwrap()
            })
            .collect();
        let a = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        let b = forward(&fp, &ofdm, 10.0, Mode::Train).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        let ga = backward(&fp, &a.tape).unwrap();
        let gb = backward(&fp, &b.tape).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn stale_tape_and_bad_shapes_rejected() {
        let (mut fp, mut samples) = random_instance(&cfg(), 5, 3).unwrap();
        let out = forward(&fp, &samples, 10.0, Mode::Train).unwrap();
        fp.touch();
        assert!(matches!(backward(&fp, &out.tape), Err(Error::Usage(_))));
        samples[1].noise.pop();
        assert!(forward(&fp, &samples, 10.0, Mode::Train).is_err());
    }

    #[test]
    fn zero_loss_gradient_when_targets_saturate() {
        // a demodulator that outputs exactly the target bits makes the clamped loss flat
        let (mut fp, samples) = random_instance(&cfg(), 6, 3).unwrap();
        let last = fp.demod.dense.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(-50.0);
        let all_zero: Vec<TrainingSample> = samples
            .into_iter()
            .map(|mut s| {
                s.bits = BitBlock::zeros(2, 2);
                s
            })
            .collect();
        let out = forward(&fp, &all_zero, 10.0, Mode::Train).unwrap();
        assert!(out.loss < 4.0 * 1.1e-7);
        assert_eq!(backward(&fp, &out.tape).unwrap().max_abs(), 0.0);
    }
}
