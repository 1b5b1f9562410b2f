use std::sync::Arc;
use std::time::Instant;

use super::sweep::Scheme;
use crate::baselines::{beam_sweep, fully_digital, random_phase, DftCodebook};
use crate::error::{Error, Result};
use crate::jhpf::{design, design_genie, network_specs, FrameworkParams, SystemConfig};
use crate::numerics::{CMatrix, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub scheme: String,
    pub median_ns: f64,
    pub p95_ns: f64,
    /// Rough real floating-point operation count of one design call.
    pub flops_estimate: f64,
}

/// Real flops of a complex `m x k` by `k x n` product.
fn cgemm(m: usize, k: usize, n: usize) -> f64 {
    8.0 * (m * k * n) as f64
}

fn flops(scheme: &Scheme, cfg: &SystemConfig) -> f64 {
    let (nt, nr, tr, rr, ns) = (cfg.n_t, cfg.n_r, cfg.n_t_rf, cfg.n_r_rf, cfg.n_s);
    // one-sided Jacobi: about ten sweeps of n^2/2 rotations over m-long columns
    let svd = |m: usize, n: usize| 10.0 * 0.5 * (n * n) as f64 * 12.0 * m as f64;
    let digital = svd(rr, tr) + cgemm(nt, nr, tr) + cgemm(rr, nr, tr) + cgemm(nt, tr, ns);
    match scheme {
        Scheme::FullyDigital => svd(nr, nt),
        Scheme::BeamSweep => cgemm(nr, nt, nt) + cgemm(nr, nr, nt) + digital,
        Scheme::RandomPhase => digital,
        Scheme::DlJhpf(fp) | Scheme::DlJhpfGenie(fp) => {
            let nets: f64 = network_specs(cfg, fp.phase_activation())
                .expect("validated config")
                .iter()
                .take(6)
                .map(|s| 2.0 * s.macs() as f64)
                .sum();
            nets + cgemm(nr, nt, tr) + cgemm(rr, nr, tr) + cgemm(nt, tr, ns)
        }
    }
}

/// Wall time of single hybrid-weight design calls on `channels` (cycled), after `warmup`
/// untimed rounds. Schemes are timed round-robin, one call each per round, so that slow
/// phases of a shared host affect every scheme alike.
pub fn latency_bench(
    schemes: &[Scheme],
    cfg: &SystemConfig,
    channels: &[CMatrix],
    n_reps: usize,
    warmup: usize,
) -> Result<Vec<LatencyRow>> {
    if n_reps == 0 || schemes.is_empty() || channels.is_empty() {
        return Err(Error::input("latency table would be empty: need reps, schemes and channels"));
    }
    for scheme in schemes {
        if let Scheme::DlJhpf(fp) | Scheme::DlJhpfGenie(fp) = scheme {
            fp.check_config(cfg)?;
        }
    }
    let tx = DftCodebook::new(cfg.n_t);
    let rx = DftCodebook::new(cfg.n_r);
    let mut rng = RngStream::new(0, 0);
    let mut call = |scheme: &Scheme, h: &CMatrix| -> Result<()> {
        let wideband = || vec![vec![h.clone(); cfg.k_subcarriers]];
        match scheme {
            Scheme::FullyDigital => {
                std::hint::black_box(fully_digital(h, cfg.n_s)?);
            }
            Scheme::BeamSweep => {
                std::hint::black_box(beam_sweep(h, cfg, &tx, &rx)?);
            }
            Scheme::RandomPhase => {
                std::hint::black_box(random_phase(h, cfg, &mut rng)?);
            }
            Scheme::DlJhpf(fp) => {
                let fp: &Arc<FrameworkParams> = fp;
                std::hint::black_box(design(fp, &wideband())?);
            }
            Scheme::DlJhpfGenie(fp) => {
                std::hint::black_box(design_genie(fp, &wideband())?);
            }
        }
        Ok(())
    };
    for i in 0..warmup {
        for scheme in schemes {
            call(scheme, &channels[i % channels.len()])?;
        }
    }
    let mut times = vec![Vec::with_capacity(n_reps); schemes.len()];
    for i in 0..n_reps {
        let h = &channels[i % channels.len()];
        for (scheme, t) in schemes.iter().zip(&mut times) {
            let t0 = Instant::now();
            call(scheme, h)?;
            t.push(t0.elapsed().as_nanos() as f64);
        }
    }
    let mut rows = Vec::with_capacity(schemes.len());
    for (scheme, mut t) in schemes.iter().zip(times) {
        t.sort_by(f64::total_cmp);
        let pick = |q: f64| t[((q * (t.len() - 1) as f64).round() as usize).min(t.len() - 1)];
        rows.push(LatencyRow {
            scheme: scheme.name().into(),
            median_ns: pick(0.5),
            p95_ns: pick(0.95),
            flops_estimate: flops(scheme, cfg),
        });
    }
    Ok(rows)
}
