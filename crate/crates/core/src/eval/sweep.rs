use std::sync::Arc;

use rayon::prelude::*;

use super::curve::{BerCurve, BerPoint};
use crate::baselines::{
    beam_sweep_analog, digital_stage, equalize_detect, fully_digital, random_analog, stream_gains, DftCodebook,
};
use crate::channel::{domain, gen_wideband, perturb_csi, ChannelMatrix, ScenarioParams};
use crate::error::{Error, Result};
use crate::jhpf::{design, design_genie, detect, FrameworkParams, SystemConfig};
use crate::numerics::{CMatrix, RngStream, C64};
use crate::phy::{modulate, receive_linear, snr_to_power, transmit_receive, BitBlock, HybridWeights};

/// Transmission schemes under comparison.
#[derive(Debug, Clone)]
pub enum Scheme {
    FullyDigital,
    BeamSweep,
    RandomPhase,
    DlJhpf(Arc<FrameworkParams>),
    /// Trained framework with the analog pair re-derived on every subcarrier.
    DlJhpfGenie(Arc<FrameworkParams>),
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::FullyDigital => "fully-digital",
            Scheme::BeamSweep => "beam-sweep",
            Scheme::RandomPhase => "random-phase",
            Scheme::DlJhpf(_) => "dl-jhpf",
            Scheme::DlJhpfGenie(_) => "dl-jhpf-genie",
        }
    }
}

/// Where trial channels come from.
#[derive(Debug, Clone, Copy)]
pub enum ChannelSource<'a> {
    /// Fresh draws per trial.
    Generated {
        scenario: &'a ScenarioParams,
        sampling_rate_hz: f64,
    },
    /// Trial `t` uses stored channel `t mod len`.
    Dataset {
        name: &'a str,
        channels: &'a [Vec<CMatrix>],
    },
}

impl ChannelSource<'_> {
    fn label(&self) -> String {
        match self {
            ChannelSource::Generated { scenario, .. } => scenario.name.clone(),
            ChannelSource::Dataset { name, .. } => name.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsiCondition {
    Perfect,
    /// Channel estimate at the given estimation SNR in dB.
    Estimated(f64),
}

impl CsiCondition {
    pub fn label(&self) -> String {
        match self {
            CsiCondition::Perfect => "perfect".into(),
            CsiCondition::Estimated(db) => format!("est{db}db"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub min_errors: u64,
    pub max_trials: u64,
    pub seed: u64,
    pub csi: CsiCondition,
}

impl SweepConfig {
    pub fn new(snr_db: Vec<f64>, seed: u64) -> Self {
        SweepConfig {
            snr_db,
            min_errors: 100,
            max_trials: 100_000,
            seed,
            csi: CsiCondition::Perfect,
        }
    }
}

/// Trials per work unit; stopping is checked only after whole chunks.
const CHUNK: u64 = 64;
/// Chunks evaluated concurrently before the stopping rule is consulted.
const ROUND: u64 = 8;

/// Draws for one trial. Stream paths depend on the seed, SNR index and trial only, so all
/// schemes and CSI conditions see the same channels, bits and noise.
struct Trial {
    h: Vec<CMatrix>,
    h_est: Vec<CMatrix>,
    bits: Vec<BitBlock>,
    noise: Vec<Vec<C64>>,
}

fn draw_trial(cfg: &SystemConfig, src: &ChannelSource, sw: &SweepConfig, snr_idx: u64, trial: u64) -> Result<Trial> {
    let path = |d: u64| RngStream::for_path(sw.seed, &[d, snr_idx, trial]);
    let h: Vec<CMatrix> = match src {
        ChannelSource::Generated {
            scenario,
            sampling_rate_hz,
        } => {
            gen_wideband(cfg.dims(), scenario, cfg.k_subcarriers, *sampling_rate_hz, &mut path(domain::CHANNEL))?
                .per_subcarrier
                .into_iter()
                .map(|c| c.h)
                .collect()
        }
        ChannelSource::Dataset { channels, .. } => {
            let c = &channels[(trial % channels.len() as u64) as usize];
            if c.len() != cfg.k_subcarriers {
                return Err(Error::Usage(format!(
                    "dataset channels have {} subcarriers, the system has K = {}",
                    c.len(),
                    cfg.k_subcarriers
                )));
            }
            c.clone()
        }
    };
    let h_est = match sw.csi {
        CsiCondition::Perfect => h.clone(),
        CsiCondition::Estimated(db) => {
            let mut s = path(domain::CSI);
            h.iter()
                .map(|m| {
                    let cm = ChannelMatrix {
                        h: m.clone(),
                        scenario: String::new(),
                        seed: 0,
                        stream: 0,
                    };
                    perturb_csi(&cm, db, &mut s).h
                })
                .collect()
        }
    };
    let mut bs = path(domain::BITS);
    let mut ns = path(domain::NOISE);
    let bits = (0..cfg.k_subcarriers)
        .map(|_| BitBlock::random(cfg.n_s, cfg.bits_per_symbol(), &mut bs))
        .collect();
    let noise = (0..cfg.k_subcarriers)
        .map(|_| (0..cfg.n_r).map(|_| ns.complex_normal(1.0)).collect())
        .collect();
    Ok(Trial { h, h_est, bits, noise })
}

struct Codebooks {
    tx: DftCodebook,
    rx: DftCodebook,
}

/// Bit errors and bits sent over a block of trials.
fn run_chunk(
    scheme: &Scheme,
    cfg: &SystemConfig,
    books: &Codebooks,
    trials: &[Trial],
    first_trial: u64,
    sw: &SweepConfig,
    snr_idx: u64,
    power: f64,
) -> Result<(u64, u64)> {
    let mut errors = 0u64;
    let mut bits = 0u64;
    let mut tally = |sent: &BitBlock, got: &BitBlock| {
        errors += sent.hamming(got) as u64;
        bits += sent.len() as u64;
    };
    match scheme {
        Scheme::DlJhpf(fp) | Scheme::DlJhpfGenie(fp) => {
            let est: Vec<Vec<CMatrix>> = trials.iter().map(|t| t.h_est.clone()).collect();
            let weights = if matches!(scheme, Scheme::DlJhpf(_)) {
                design(fp, &est)?
            } else {
                design_genie(fp, &est)?
            };
            let mut received = Vec::with_capacity(trials.len() * cfg.k_subcarriers);
            for (t, ws) in trials.iter().zip(&weights) {
                for k in 0..cfg.k_subcarriers {
                    let x = modulate(&t.bits[k], cfg.m_order)?;
                    received.push(transmit_receive(&t.h[k], &ws[k], &x, &t.noise[k], power)?);
                }
            }
            let decided = detect(fp, &received)?;
            let sent = trials.iter().flat_map(|t| t.bits.iter());
            for (s, d) in sent.zip(&decided) {
                tally(s, d);
            }
        }
        Scheme::FullyDigital => {
            for t in trials {
                for k in 0..cfg.k_subcarriers {
                    let fd = fully_digital(&t.h_est[k], cfg.n_s)?;
                    let gains = stream_gains(&t.h_est[k], &fd.precoder, &fd.combiner, power)?;
                    let x = modulate(&t.bits[k], cfg.m_order)?;
                    let r = receive_linear(&t.h[k], &fd.precoder, &fd.combiner, &x, &t.noise[k], power)?;
                    tally(&t.bits[k], &equalize_detect(&r, &gains, cfg.m_order)?);
                }
            }
        }
        Scheme::BeamSweep | Scheme::RandomPhase => {
            let q = cfg.anchor_subcarrier_q;
            for (j, t) in trials.iter().enumerate() {
                let (f_rf, w_rf) = if matches!(scheme, Scheme::BeamSweep) {
                    beam_sweep_analog(&t.h_est[q], cfg, &books.tx, &books.rx)?
                } else {
                    let trial = first_trial + j as u64;
                    random_analog(cfg, &mut RngStream::for_path(sw.seed, &[domain::PHASES, snr_idx, trial]))?
                };
                for k in 0..cfg.k_subcarriers {
                    let w: HybridWeights = digital_stage(&t.h_est[k], f_rf.clone(), w_rf.clone(), cfg.n_s)?;
                    let gains = stream_gains(&t.h_est[k], &w.precoder(), &w.combiner(), power)?;
                    let x = modulate(&t.bits[k], cfg.m_order)?;
                    let r = transmit_receive(&t.h[k], &w, &x, &t.noise[k], power)?;
                    tally(&t.bits[k], &equalize_detect(&r, &gains, cfg.m_order)?);
                }
            }
        }
    }
    Ok((errors, bits))
}

/// BER per SNR point. Each point runs chunks of trials until `min_errors` bit errors or
/// `max_trials` trials; points that stop short of `min_errors` are flagged as censored.
/// Results are identical for any worker count.
pub fn ber_sweep(scheme: &Scheme, cfg: &SystemConfig, src: &ChannelSource, sw: &SweepConfig) -> Result<BerCurve> {
    cfg.validate()?;
    if sw.snr_db.is_empty() {
        return Err(Error::input("SNR grid is empty"));
    }
    if sw.max_trials == 0 {
        return Err(Error::input("max_trials must be positive"));
    }
    if let ChannelSource::Dataset { channels, .. } = src {
        if channels.is_empty() {
            return Err(Error::input("channel dataset is empty"));
        }
    }
    if let Scheme::DlJhpf(fp) | Scheme::DlJhpfGenie(fp) = scheme {
        fp.check_config(cfg)?;
    }
    let books = Codebooks {
        tx: DftCodebook::new(cfg.n_t),
        rx: DftCodebook::new(cfg.n_r),
    };
    let mut points = Vec::with_capacity(sw.snr_db.len());
    for (si, &snr) in sw.snr_db.iter().enumerate() {
        let si = si as u64;
        let power = snr_to_power(snr);
        let (mut errors, mut bits, mut trials) = (0u64, 0u64, 0u64);
        'outer: while trials < sw.max_trials && errors < sw.min_errors {
            let starts: Vec<u64> = (0..ROUND)
                .map(|c| trials + c * CHUNK)
                .filter(|&s| s < sw.max_trials)
                .collect();
            let results = starts
                .par_iter()
                .map(|&start| {
                    let end = (start + CHUNK).min(sw.max_trials);
                    let draws = (start..end)
                        .map(|t| draw_trial(cfg, src, sw, si, t))
                        .collect::<Result<Vec<_>>>()?;
                    let (e, b) = run_chunk(scheme, cfg, &books, &draws, start, sw, si, power)?;
                    Ok((e, b, end - start))
                })
                .collect::<Result<Vec<_>>>()?;
            for (e, b, n) in results {
                errors += e;
                bits += b;
                trials += n;
                if errors >= sw.min_errors {
                    break 'outer;
                }
            }
        }
        points.push(BerPoint {
            snr_db: snr,
            bit_errors: errors,
            bits_total: bits,
            censored: errors < sw.min_errors,
        });
    }
    Ok(BerCurve {
        scheme: scheme.name().into(),
        scenario: src.label(),
        csi_condition: sw.csi.label(),
        points,
    })
}

/// DL-JHPF under perfect and estimated CSI (10 and 20 dB) in the training scenario and a
/// shifted scenario, plus the random-phase control in the shifted scenario.
pub fn mismatch_suite(
    fp: Arc<FrameworkParams>,
    cfg: &SystemConfig,
    train_scenario: &ChannelSource,
    shifted_scenario: &ChannelSource,
    sw: &SweepConfig,
) -> Result<Vec<BerCurve>> {
    let conditions = [
        CsiCondition::Perfect,
        CsiCondition::Estimated(20.0),
        CsiCondition::Estimated(10.0),
    ];
    let mut curves = Vec::new();
    for src in [train_scenario, shifted_scenario] {
        for csi in conditions {
            let sw = SweepConfig { csi, ..sw.clone() };
            curves.push(ber_sweep(&Scheme::DlJhpf(fp.clone()), cfg, src, &sw)?);
        }
    }
    curves.push(ber_sweep(&Scheme::RandomPhase, cfg, shifted_scenario, sw)?);
    Ok(curves)
}
