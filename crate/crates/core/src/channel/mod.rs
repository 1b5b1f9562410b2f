//! Clustered mmWave channels (narrowband and per-subcarrier wideband), CSI perturbation and
//! the on-disk dataset format.
//!
//! A channel is a sum over `n_cl` clusters of `n_ray` rays, each contributing
//! `alpha * a_R(aoa) * a_T(aod)^H`, scaled by `sqrt(N_T N_R / (n_cl n_ray))`. The wideband
//! form applies a per-cluster delay phase `exp(-j 2 pi tau_n f_s k / K)` on subcarrier `k`.

mod dataset;

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, RngStream, C64};

pub use dataset::{ChannelDataset, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};

/// Transmit/receive array sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AntennaDims {
    pub n_t: usize,
    pub n_r: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub name: String,
    pub n_cl: usize,
    pub n_ray: usize,
    /// Mean path power `sigma_alpha^2`, averaged over clusters.
    pub avg_power_gain: f64,
    /// Power drop from one cluster to the next, in dB.
    pub cluster_power_decay_db: f64,
    /// Angular spread of rays around each cluster centre.
    pub angular_spread_rad: f64,
    /// Mean of the exponential cluster-delay distribution.
    pub delay_spread_s: f64,
    /// Element spacing over wavelength, `d / lambda`.
    pub antenna_spacing_ratio: f64,
}

impl ScenarioParams {
    /// Street-canyon-like preset: 100 ns delay spread, 10 deg spread, 3 dB per-cluster decay.
    pub fn umi_like() -> Self {
        ScenarioParams {
            name: "umi-like".into(),
            n_cl: 3,
            n_ray: 20,
            avg_power_gain: 1.0,
            cluster_power_decay_db: 3.0,
            angular_spread_rad: 10f64.to_radians(),
            delay_spread_s: 100e-9,
            antenna_spacing_ratio: 0.5,
        }
    }

    /// Macro-cell-like preset: 300 ns delay spread, 15 deg spread, 6 dB per-cluster decay.
    pub fn uma_like() -> Self {
        ScenarioParams {
            name: "uma-like".into(),
            n_cl: 3,
            n_ray: 20,
            avg_power_gain: 1.0,
            cluster_power_decay_db: 6.0,
            angular_spread_rad: 15f64.to_radians(),
            delay_spread_s: 300e-9,
            antenna_spacing_ratio: 0.5,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "umi-like" => Ok(Self::umi_like()),
            "uma-like" => Ok(Self::uma_like()),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected umi-like or uma-like)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cl == 0 || self.n_ray == 0 {
            return Err(Error::Config("n_cl and n_ray must be at least 1".into()));
        }
        if !(self.angular_spread_rad > 0.0 && self.angular_spread_rad < PI) {
            return Err(Error::Config("angular spread must lie in (0, pi)".into()));
        }
        if !(self.avg_power_gain >= 0.0) || !(self.cluster_power_decay_db >= 0.0) {
            return Err(Error::Config("power gain and decay must be non-negative".into()));
        }
        if !(self.delay_spread_s > 0.0) || !(self.antenna_spacing_ratio > 0.0) {
            return Err(Error::Config("delay spread and spacing must be positive".into()));
        }
        Ok(())
    }

    /// Per-cluster variances, geometrically decaying and normalised to mean `avg_power_gain`.
    pub fn cluster_powers(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_cl)
            .map(|n| 10f64.powf(-self.cluster_power_decay_db * n as f64 / 10.0))
            .collect();
        let mean = raw.iter().sum::<f64>() / self.n_cl as f64;
        raw.iter().map(|p| p / mean * self.avg_power_gain).collect()
    }
}

/// Narrowband channel realisation with the stream that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `N_R x N_T`.
    pub h: CMatrix,
    pub scenario: String,
    pub seed: u64,
    pub stream: u64,
}

impl ChannelMatrix {
    pub fn n_r(&self) -> usize {
        self.h.rows()
    }

    pub fn n_t(&self) -> usize {
        self.h.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidebandChannel {
    pub per_subcarrier: Vec<ChannelMatrix>,
    pub sampling_rate_hz: f64,
}

impl WidebandChannel {
    pub fn k_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }
}

/// Uniform-linear-array response, `(1/sqrt(n)) exp(-j 2 pi d i sin(theta))`.
pub fn array_response(theta: f64, n_elems: usize, spacing_ratio: f64) -> Vec<C64> {
    let scale = 1.0 / (n_elems as f64).sqrt();
    let sin_theta = theta.sin();
    (0..n_elems)
        .map(|i| C64::from_polar(scale, -2.0 * PI * spacing_ratio * i as f64 * sin_theta))
        .collect()
}

/// One draw of every random quantity in the model.
///
/// Draw order from the stream (fixed, part of the reproducibility contract): for each
/// cluster its AoA and AoD centres, then the `n_cl` raw delays, then for each ray
/// `alpha`, AoA offset and AoD offset.
struct PathDraw {
    /// Per-cluster sum of its rays' outer products, already scaled by beta.
    cluster_terms: Vec<CMatrix>,
    /// Ascending, first is zero.
    delays: Vec<f64>,
}

fn draw_paths(dims: AntennaDims, sc: &ScenarioParams, stream: &mut RngStream) -> PathDraw {
    let n_paths = sc.n_cl * sc.n_ray;
    let beta = ((dims.n_t * dims.n_r) as f64 / n_paths as f64).sqrt();
    let powers = sc.cluster_powers();
    let lap_scale = sc.angular_spread_rad / 2f64.sqrt();

    let centres: Vec<(f64, f64)> = (0..sc.n_cl)
        .map(|_| (2.0 * PI * stream.uniform(), 2.0 * PI * stream.uniform()))
        .collect();
    let mut delays: Vec<f64> = (0..sc.n_cl).map(|_| stream.exponential(sc.delay_spread_s)).collect();
    delays.sort_by(f64::total_cmp);
    let first = delays[0];
    for d in &mut delays {
        *d -= first;
    }

    let mut cluster_terms = Vec::with_capacity(sc.n_cl);
    for (n, &(aoa_c, aod_c)) in centres.iter().enumerate() {
        let mut term = CMatrix::zeros(dims.n_r, dims.n_t);
        for _ in 0..sc.n_ray {
            let alpha = stream.complex_normal(powers[n]) * beta;
            let aoa = aoa_c + stream.laplacian(lap_scale);
            let aod = aod_c + stream.laplacian(lap_scale);
            let a_r = array_response(aoa, dims.n_r, sc.antenna_spacing_ratio);
            let a_t = array_response(aod, dims.n_t, sc.antenna_spacing_ratio);
            let out = term.as_mut_slice();
            for (i, ar) in a_r.iter().enumerate() {
                let left = alpha * ar;
                let row = &mut out[i * dims.n_t..(i + 1) * dims.n_t];
                for (o, at) in row.iter_mut().zip(&a_t) {
                    *o += left * at.conj();
                }
            }
        }
        cluster_terms.push(term);
    }
    PathDraw { cluster_terms, delays }
}

fn synthesize(draw: &PathDraw, subcarrier: usize, k_total: usize, fs: f64) -> CMatrix {
    let mut h = CMatrix::zeros(draw.cluster_terms[0].rows(), draw.cluster_terms[0].cols());
    for (term, &tau) in draw.cluster_terms.iter().zip(&draw.delays) {
        if subcarrier == 0 {
            h.add_assign(term);
        } else {
            let phase = C64::from_polar(
                1.0,
                -2.0 * PI * tau * fs * subcarrier as f64 / k_total as f64,
            );
            h.add_assign(&term.scale_complex(phase));
        }
    }
    h
}

fn check_dims(dims: AntennaDims) -> Result<()> {
    if dims.n_t == 0 || dims.n_r == 0 {
        return Err(Error::input("antenna counts must be positive"));
    }
    Ok(())
}

pub fn gen_narrowband(
    dims: AntennaDims,
    sc: &ScenarioParams,
    stream: &mut RngStream,
) -> Result<ChannelMatrix> {
    check_dims(dims)?;
    sc.validate()?;
    let (seed, index) = (stream.seed(), stream.stream_index());
    let draw = draw_paths(dims, sc, stream);
    Ok(ChannelMatrix {
        h: synthesize(&draw, 0, 1, 0.0),
        scenario: sc.name.clone(),
        seed,
        stream: index,
    })
}

pub fn gen_wideband(
    dims: AntennaDims,
    sc: &ScenarioParams,
    k_subcarriers: usize,
    sampling_rate_hz: f64,
    stream: &mut RngStream,
) -> Result<WidebandChannel> {
    check_dims(dims)?;
    sc.validate()?;
    if k_subcarriers == 0 {
        return Err(Error::input("need at least one subcarrier"));
    }
    let (seed, index) = (stream.seed(), stream.stream_index());
    let draw = draw_paths(dims, sc, stream);
    let per_subcarrier = (0..k_subcarriers)
        .map(|k| ChannelMatrix {
            h: synthesize(&draw, k, k_subcarriers, sampling_rate_hz),
            scenario: sc.name.clone(),
            seed,
            stream: index,
        })
        .collect();
    Ok(WidebandChannel {
        per_subcarrier,
        sampling_rate_hz,
    })
}

/// Additive-error channel estimate `H + E` with `E ~ CN(0, 10^(-snr/10) ||H||^2 / (N_T N_R))`.
///
/// `est_snr_db = +inf` means perfect CSI and returns `h` unchanged.
pub fn perturb_csi(h: &ChannelMatrix, est_snr_db: f64, stream: &mut RngStream) -> ChannelMatrix {
    if est_snr_db == f64::INFINITY {
        return h.clone();
    }
    let n = (h.n_t() * h.n_r()) as f64;
    let var = 10f64.powf(-est_snr_db / 10.0) * h.h.frob_norm_sqr() / n;
    let noisy = h.h.map(|z| z + stream.complex_normal(var));
    ChannelMatrix {
        h: noisy,
        ..h.clone()
    }
}

/// Stream-domain tags so different uses of one seed never share ChaCha streams.
pub mod domain {
    pub const CHANNEL: u64 = 1;
    pub const BITS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SUBCARRIER: u64 = 4;
    pub const CSI: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const PHASES: u64 = 8;
}

/// Generates `count` channels with `K` subcarriers each; sample `i` uses stream path
/// `[CHANNEL, set_tag, i]`, so the result does not depend on the thread count.
pub fn gen_dataset(
    dims: AntennaDims,
    sc: &ScenarioParams,
    k_subcarriers: usize,
    sampling_rate_hz: f64,
    seed: u64,
    set_tag: u64,
    count: usize,
) -> Result<Vec<Vec<CMatrix>>> {
    sc.validate()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut s = RngStream::for_path(seed, &[domain::CHANNEL, set_tag, i as u64]);
            let wb = gen_wideband(dims, sc, k_subcarriers, sampling_rate_hz, &mut s)?;
            Ok(wb.per_subcarrier.into_iter().map(|c| c.h).collect())
        })
        .collect()
}
