//! Gradient verification for the full pipeline: central finite differences over every
//! trainable parameter, and closed-form checks of the two custom-layer gradients.

use super::model::{backward_traced, forward, TrainingSample};
use super::{FrameworkParams, SystemConfig};
use crate::error::Result;
use crate::neural::{Activation, Mode};
use crate::numerics::RngStream;
use crate::phy::{snr_to_power, BitBlock};

/// Relative floor of the error denominator, as a fraction of the largest gradient entry.
///
/// Roundoff in the forward pass (tens of ulps of the loss) divided by the 2h of a central
/// difference leaves about 1e-8 absolute noise at h = 1e-6. Entries that are exactly zero,
/// such as biases feeding a batch-normalized layer, would otherwise score O(1) errors.
pub const REL_FLOOR: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, REL_FLOOR * scale)`.
pub fn relative_error(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR * scale.max(1.0))
}

/// A random parameter set and batch on channels with i.i.d. CN(0, 1) entries.
pub fn random_instance(cfg: &SystemConfig, seed: u64, batch: usize) -> Result<(FrameworkParams, Vec<TrainingSample>)> {
    let mut rng = RngStream::new(seed, 0);
    let mut fp = FrameworkParams::init(cfg, Activation::Relu, &mut rng)?;
    // move BN away from identity so its gradients are exercised
    for net in fp.nets_mut() {
        for bn in net.bn.iter_mut().flatten() {
            bn.gamma.mapv_inplace(|_| 0.5 + rng.uniform());
            bn.beta.mapv_inplace(|_| 0.2 * (rng.uniform() - 0.5));
        }
    }
    let samples = (0..batch)
        .map(|_| {
            let h = crate::numerics::CMatrix::from_fn(cfg.n_r, cfg.n_t, |_, _| rng.complex_normal(1.0));
            let bits = BitBlock::random(cfg.n_s, cfg.bits_per_symbol(), &mut rng);
            let noise = (0..cfg.n_r).map(|_| rng.complex_normal(1.0)).collect();
            TrainingSample::narrowband(h, bits, noise)
        })
        .collect();
    Ok((fp, samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub n_params: usize,
    /// Largest gradient magnitude, the scale of the error floor.
    pub grad_scale: f64,
    pub max_rel_err: f64,
}

/// Compares the tape gradient of the train-mode batch BCE with central differences for
/// every trainable parameter.
pub fn finite_difference_check(fp: &FrameworkParams, samples: &[TrainingSample], snr_db: f64, step: f64) -> Result<FdReport> {
    let power = snr_to_power(snr_db);
    let out = forward(fp, samples, power, Mode::Train)?;
    let (grads, _) = backward_traced(fp, &out.tape)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let scale = grads.max_abs();
    let mut probe = fp.clone();
    let mut worst = 0.0f64;
    let mut n_params = 0;
    for (ti, tensor) in analytic.iter().enumerate() {
        for (i, &ga) in tensor.iter().enumerate() {
            let orig = probe.tensors_mut()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let fp_plus = forward(&probe, samples, power, Mode::Train)?.loss;
            probe.tensors_mut()[ti][i] = orig - step;
            let fp_minus = forward(&probe, samples, power, Mode::Train)?.loss;
            probe.tensors_mut()[ti][i] = orig;
            worst = worst.max(relative_error(ga, (fp_plus - fp_minus) / (2.0 * step), scale));
            n_params += 1;
        }
    }
    Ok(FdReport {
        n_params,
        grad_scale: scale,
        max_rel_err: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormReport {
    /// Worst absolute gap between the tape's phase gradients and the trigonometric form.
    pub phase_err: f64,
    /// Worst absolute gap for the real and imaginary parts of the digital combiner.
    pub combiner_err: f64,
}

/// Checks the tape against the element-wise closed forms
/// `dL/dphi = (-sin(phi) dL/dRe F + cos(phi) dL/dIm F) / sqrt(N)` and
/// `dL/dRe W[l,s] = Re z_l Re g_s + Im z_l Im g_s`,
/// `dL/dIm W[l,s] = Im z_l Re g_s - Re z_l Im g_s`, where `g = dL/dr` and `z = W_RF^H y`.
pub fn closed_form_check(fp: &FrameworkParams, samples: &[TrainingSample], snr_db: f64) -> Result<ClosedFormReport> {
    let cfg = &fp.cfg;
    let out = forward(fp, samples, snr_to_power(snr_db), Mode::Train)?;
    let (_, trace) = backward_traced(fp, &out.tape)?;
    let phis_t = out.tape.design.pp.output();
    let phis_r = out.tape.design.cp.output();
    let mut phase_err = 0.0f64;
    let mut combiner_err = 0.0f64;
    for k in 0..samples.len() {
        for (phis, g, g_phi, n, rf) in [
            (phis_t, &trace.g_f_rf[k], &trace.g_phi_t, cfg.n_t, cfg.n_t_rf),
            (phis_r, &trace.g_w_rf[k], &trace.g_phi_r, cfg.n_r, cfg.n_r_rf),
        ] {
            let c = 1.0 / (n as f64).sqrt();
            for j in 0..rf {
                for i in 0..n {
                    let phi = phis[[k, j * n + i]];
                    let d_re = g[(i, j)].re;
                    let d_im = g[(i, j)].im;
                    let hand = -phi.sin() * c * d_re + phi.cos() * c * d_im;
                    phase_err = phase_err.max((hand - g_phi[[k, j * n + i]]).abs());
                }
            }
        }
        let z = &out.tape.signals[k].z;
        let g = &trace.g_r[k];
        for s in 0..cfg.n_s {
            for l in 0..cfg.n_r_rf {
                let d_re = z[l].re * g[s].re + z[l].im * g[s].im;
                let d_im = z[l].im * g[s].re - z[l].re * g[s].im;
                let idx = s * cfg.n_r_rf + l;
                combiner_err = combiner_err
                    .max((d_re - trace.g_re_dc[[k, idx]]).abs())
                    .max((d_im - trace.g_im_dc[[k, idx]]).abs());
            }
        }
    }
    Ok(ClosedFormReport {
        phase_err,
        combiner_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_pipeline_matches_finite_differences() {
        let cfg = SystemConfig::narrowband(8, 4, 2, 2, 2);
        let (fp, samples) = random_instance(&cfg, 11, 4).unwrap();
        let r = finite_difference_check(&fp, &samples, 10.0, 1e-6).unwrap();
        assert_eq!(r.n_params, fp.n_trainable());
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn closed_forms_match_tape() {
        let cfg = SystemConfig::narrowband(8, 4, 2, 2, 2);
        for seed in 0..5 {
            let (fp, samples) = random_instance(&cfg, seed, 4).unwrap();
            let r = closed_form_check(&fp, &samples, 10.0).unwrap();
            assert!(r.phase_err < 1e-10 && r.combiner_err < 1e-10, "{r:?}");
        }
    }
}
