//! One function per subcommand. Each reads its inputs from and writes its outputs to the
//! configured output directory and returns a short plain-text summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use jhpf_core::channel::{gen_dataset, ChannelDataset, DatasetHeader, ScenarioParams};
use jhpf_core::eval::{ber_sweep, latency_bench, mismatch_suite, BerCurve, ChannelSource, CsiCondition, Scheme, SweepConfig};
use jhpf_core::jhpf::gradcheck::{closed_form_check, finite_difference_check, random_instance};
use jhpf_core::jhpf::{history_csv, train as fit, FrameworkParams, TrainSet};
use jhpf_core::neural::{config_digest, Checkpoint};
use jhpf_core::{CMatrix, RngStream};

use crate::config::{EvalChannels, RunConfig};

pub const CHECKPOINT: &str = "checkpoint.jhpf";
pub const HISTORY: &str = "history.csv";
pub const CURVES_DIR: &str = "curves";
pub const MISMATCH_DIR: &str = "mismatch";
pub const MISMATCH_REPORT: &str = "report.txt";
pub const GRADCHECK_REPORT: &str = "gradcheck.txt";
pub const BENCH_REPORT: &str = "bench.txt";
/// A gradient check passes below this relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Dataset splits: file stem and channel stream tag.
const SPLITS: [(&str, u64); 3] = [("train", 0), ("val", 1), ("test", 2)];
/// Channel stream tag of the bench channels, disjoint from the dataset splits.
const BENCH_TAG: u64 = 3;

pub fn dataset_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.out_dir.join(format!("{split}.chan"))
}

fn provenance(cfg: &RunConfig, what: &str) -> String {
    format!("# jhpf {what} {}", cfg.seed_line())
}

fn split_size(cfg: &RunConfig, split: &str) -> usize {
    match split {
        "train" => cfg.data.train,
        "val" => cfg.data.val,
        _ => cfg.data.test,
    }
}

fn split_scenario<'a>(cfg: &'a RunConfig, split: &str) -> &'a ScenarioParams {
    if split == "test" {
        &cfg.scenario_test
    } else {
        &cfg.scenario_train
    }
}

pub fn gen_channels(cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let sys = &cfg.system;
    let mut summary = String::new();
    for (split, tag) in SPLITS {
        let sc = split_scenario(cfg, split);
        let count = split_size(cfg, split);
        let samples = gen_dataset(sys.dims(), sc, sys.k_subcarriers, cfg.sampling_rate_hz, cfg.seeds.data, tag, count)?;
        let ds = ChannelDataset {
            header: DatasetHeader {
                n_t: sys.n_t as u32,
                n_r: sys.n_r as u32,
                k: sys.k_subcarriers as u32,
                rng_id: format!(
                    "{} {} scenario={} split={split} sampling_rate_hz={}",
                    RngStream::ALGORITHM,
                    cfg.seed_line(),
                    sc.name,
                    cfg.sampling_rate_hz
                ),
            },
            samples,
        };
        let path = dataset_path(cfg, split);
        ds.save(&path).with_context(|| format!("cannot write {}", path.display()))?;
        summary.push_str(&format!("wrote {} ({count} channels, {})\n", path.display(), sc.name));
    }
    Ok(summary)
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing input file {} (run {producer} first)", path.display());
    }
    Ok(())
}

/// Loads a dataset split and checks it against the configured dimensions.
pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Vec<Vec<CMatrix>>> {
    let path = dataset_path(cfg, split);
    require(&path, "gen-channels")?;
    let ds = ChannelDataset::load(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let h = &ds.header;
    let s = &cfg.system;
    if (h.n_t as usize, h.n_r as usize, h.k as usize) != (s.n_t, s.n_r, s.k_subcarriers) {
        bail!(
            "dimension mismatch: {} holds {}x{} channels with K = {}, the configuration needs {}x{} with K = {}",
            path.display(),
            h.n_r,
            h.n_t,
            h.k,
            s.n_r,
            s.n_t,
            s.k_subcarriers
        );
    }
    if ds.is_empty() {
        bail!("{} holds no channels", path.display());
    }
    Ok(ds.samples)
}

pub fn train(cfg: &RunConfig) -> Result<String> {
    let tr = load_split(cfg, "train")?;
    let va = load_split(cfg, "val")?;
    let set = TrainSet {
        channels: &tr,
        seed: cfg.seeds.data,
        tag: 0,
    };
    let val = TrainSet {
        channels: &va,
        seed: cfg.seeds.data,
        tag: 1,
    };
    let out = fit(&cfg.system, &set, &val, &cfg.hyper)?;
    let ck_path = cfg.out_dir.join(CHECKPOINT);
    out.best
        .to_checkpoint(config_digest(&cfg.semantic_text()))
        .save(&ck_path)
        .with_context(|| format!("cannot write {}", ck_path.display()))?;
    let hist_path = cfg.out_dir.join(HISTORY);
    fs::write(&hist_path, format!("{}\n{}", provenance(cfg, "train"), history_csv(&out.history)))
        .with_context(|| format!("cannot write {}", hist_path.display()))?;
    let worst = out
        .history
        .iter()
        .fold(Default::default(), |acc: jhpf_core::phy::ConstraintReport, r| acc.merge(r.constraints));
    let first = &out.history[0];
    let best = &out.history[out.best_epoch];
    Ok(format!(
        "trained {} epochs: val_bce {:.6} -> {:.6}, val_ber {:.6} -> {:.6} (best epoch {})\n\
         worst modulus deviation {:.3e}, worst power deviation {:.3e}\n\
         wrote {} and {}\n",
        cfg.hyper.epochs,
        first.val_bce,
        best.val_bce,
        first.val_ber,
        best.val_ber,
        out.best_epoch,
        worst.f_rf_modulus_dev.max(worst.w_rf_modulus_dev),
        worst.power_dev,
        ck_path.display(),
        hist_path.display()
    ))
}

/// Loads the trained framework and checks it against the configured system.
pub fn load_checkpoint(cfg: &RunConfig) -> Result<FrameworkParams> {
    let path = cfg.out_dir.join(CHECKPOINT);
    require(&path, "train")?;
    let ck = Checkpoint::load(&path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let fp = FrameworkParams::from_checkpoint(&ck).with_context(|| format!("checkpoint {}", path.display()))?;
    fp.check_config(&cfg.system)
        .with_context(|| format!("dimension mismatch between checkpoint {} and the configuration", path.display()))?;
    Ok(fp)
}

fn scheme(name: &str, fp: &mut Option<Arc<FrameworkParams>>, cfg: &RunConfig) -> Result<Scheme> {
    let mut trained = || -> Result<Arc<FrameworkParams>> {
        if fp.is_none() {
            *fp = Some(Arc::new(load_checkpoint(cfg)?));
        }
        Ok(fp.clone().expect("just loaded"))
    };
    Ok(match name {
        "fully-digital" => Scheme::FullyDigital,
        "beam-sweep" => Scheme::BeamSweep,
        "random-phase" => Scheme::RandomPhase,
        "dl-jhpf" => Scheme::DlJhpf(trained()?),
        "dl-jhpf-genie" => Scheme::DlJhpfGenie(trained()?),
        other => bail!("unknown scheme '{other}'"),
    })
}

fn sweep_config(cfg: &RunConfig, csi: CsiCondition) -> SweepConfig {
    SweepConfig {
        snr_db: cfg.eval.snr_db.clone(),
        min_errors: cfg.eval.min_errors,
        max_trials: cfg.eval.max_trials,
        seed: cfg.seeds.eval,
        csi,
    }
}

fn write_curve(cfg: &RunConfig, dir: &Path, curve: &BerCurve) -> Result<PathBuf> {
    let path = dir.join(curve.file_name());
    fs::write(&path, format!("{}\n{}", provenance(cfg, "ber"), curve.to_csv()))
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn curve_lines(curve: &BerCurve) -> String {
    let mut s = format!("{} {} {}\n", curve.scheme, curve.scenario, curve.csi_condition);
    for p in &curve.points {
        s.push_str(&format!(
            "  snr {:>6} dB  ber {:.4e}  ({} / {} bits{})\n",
            p.snr_db,
            p.ber(),
            p.bit_errors,
            p.bits_total,
            if p.censored { ", censored" } else { "" }
        ));
    }
    s
}

pub fn eval_ber(cfg: &RunConfig) -> Result<String> {
    let mut fp = None;
    let schemes = cfg
        .eval
        .schemes
        .iter()
        .map(|n| scheme(n, &mut fp, cfg))
        .collect::<Result<Vec<_>>>()?;
    let stored;
    let src = match cfg.eval.channels {
        EvalChannels::Generated => ChannelSource::Generated {
            scenario: &cfg.scenario_test,
            sampling_rate_hz: cfg.sampling_rate_hz,
        },
        EvalChannels::Dataset => {
            stored = load_split(cfg, "test")?;
            ChannelSource::Dataset {
                name: &cfg.scenario_test.name,
                channels: &stored,
            }
        }
    };
    let dir = cfg.out_dir.join(CURVES_DIR);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let sw = sweep_config(cfg, cfg.eval.csi);
    let mut summary = String::new();
    for s in &schemes {
        let curve = ber_sweep(s, &cfg.system, &src, &sw)?;
        let path = write_curve(cfg, &dir, &curve)?;
        summary.push_str(&curve_lines(&curve));
        summary.push_str(&format!("  wrote {}\n", path.display()));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The expected-better curve has a lower area by more than three standard deviations.
    Ordered,
    Indistinguishable,
    /// The expected-better curve is worse by more than three standard deviations.
    Reversed,
}

/// Compares areas under two BER curves where `better` is expected to have the lower area.
/// Returns the verdict, the area gap `worse - better` and its standard deviation.
pub fn compare_areas(better: &BerCurve, worse: &BerCurve) -> (Verdict, f64, f64) {
    let (a, sa) = better.area();
    let (b, sb) = worse.area();
    let gap = b - a;
    let sigma = (sa * sa + sb * sb).sqrt();
    let verdict = if gap > 3.0 * sigma {
        Verdict::Ordered
    } else if gap < -3.0 * sigma {
        Verdict::Reversed
    } else {
        Verdict::Indistinguishable
    };
    (verdict, gap, sigma)
}

/// Area comparisons of the perfect / 20 dB / 10 dB CSI curves of one scenario.
pub fn ordering_report(curves: &[BerCurve]) -> Vec<(String, Verdict, f64, f64)> {
    let find = |sc: &str, csi: &str| curves.iter().find(|c| c.scenario == sc && c.csi_condition == csi && c.scheme == "dl-jhpf");
    let mut scenarios: Vec<&str> = curves.iter().map(|c| c.scenario.as_str()).collect();
    scenarios.dedup();
    let mut rows = Vec::new();
    let labels = [
        CsiCondition::Perfect.label(),
        CsiCondition::Estimated(20.0).label(),
        CsiCondition::Estimated(10.0).label(),
    ];
    for sc in scenarios {
        for pair in labels.windows(2) {
            if let (Some(a), Some(b)) = (find(sc, &pair[0]), find(sc, &pair[1])) {
                let (v, gap, sigma) = compare_areas(a, b);
                rows.push((format!("{sc}: {} below {}", pair[0], pair[1]), v, gap, sigma));
            }
        }
    }
    rows
}

pub fn mismatch(cfg: &RunConfig) -> Result<String> {
    let fp = Arc::new(load_checkpoint(cfg)?);
    let train_src = ChannelSource::Generated {
        scenario: &cfg.scenario_train,
        sampling_rate_hz: cfg.sampling_rate_hz,
    };
    let shifted = ChannelSource::Generated {
        scenario: &cfg.scenario_test,
        sampling_rate_hz: cfg.sampling_rate_hz,
    };
    let curves = mismatch_suite(fp, &cfg.system, &train_src, &shifted, &sweep_config(cfg, CsiCondition::Perfect))?;
    let dir = cfg.out_dir.join(MISMATCH_DIR);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut report = format!("{}\n", provenance(cfg, "mismatch"));
    for c in &curves {
        write_curve(cfg, &dir, c)?;
        let (auc, sigma) = c.area();
        report.push_str(&format!(
            "area {} {} {}: {auc:.6e} +- {sigma:.2e}\n",
            c.scheme, c.scenario, c.csi_condition
        ));
    }
    for (what, v, gap, sigma) in ordering_report(&curves) {
        report.push_str(&format!("{what}: {v:?} (gap {gap:.3e}, sigma {sigma:.2e})\n"));
    }
    let path = dir.join(MISMATCH_REPORT);
    fs::write(&path, &report).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(report)
}

pub fn grad_check(cfg: &RunConfig) -> Result<String> {
    let g = &cfg.gradcheck;
    let (fp, samples) = random_instance(&cfg.system, cfg.seeds.init, g.batch)?;
    let fd = finite_difference_check(&fp, &samples, g.snr_db, g.step)?;
    let cf = closed_form_check(&fp, &samples, g.snr_db)?;
    let report = format!(
        "{}\nparams={}\ngrad_scale={:e}\nmax_rel_err={:e}\nphase_closed_form_err={:e}\ncombiner_closed_form_err={:e}\n",
        provenance(cfg, "grad-check"),
        fd.n_params,
        fd.grad_scale,
        fd.max_rel_err,
        cf.phase_err,
        cf.combiner_err
    );
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(GRADCHECK_REPORT);
    fs::write(&path, &report).with_context(|| format!("cannot write {}", path.display()))?;
    if !(fd.max_rel_err < GRADCHECK_TOL) {
        bail!(
            "gradient check failed: max_rel_err={:e} is not below {GRADCHECK_TOL:e} (see {})",
            fd.max_rel_err,
            path.display()
        );
    }
    Ok(format!("max_rel_err={:e}\n", fd.max_rel_err))
}

pub fn bench(cfg: &RunConfig) -> Result<String> {
    let fp = Arc::new(load_checkpoint(cfg)?);
    let channels: Vec<CMatrix> = gen_dataset(
        cfg.system.dims(),
        &cfg.scenario_test,
        1,
        cfg.sampling_rate_hz,
        cfg.seeds.eval,
        BENCH_TAG,
        cfg.bench.channels,
    )?
    .into_iter()
    .map(|mut k| k.swap_remove(0))
    .collect();
    let schemes = [Scheme::DlJhpf(fp), Scheme::BeamSweep, Scheme::FullyDigital];
    let rows = latency_bench(&schemes, &cfg.system, &channels, cfg.bench.reps, cfg.bench.warmup)?;
    let mut table = format!("{}\nscheme median_ns p95_ns flops_estimate\n", provenance(cfg, "bench"));
    for r in &rows {
        table.push_str(&format!(
            "{} {:.0} {:.0} {:.0}\n",
            r.scheme, r.median_ns, r.p95_ns, r.flops_estimate
        ));
    }
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(BENCH_REPORT);
    fs::write(&path, &table).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(table)
}

/// Parses the `scheme median_ns ...` rows of a bench report into `(scheme, median_ns)`.
pub fn parse_bench_report(text: &str) -> Result<Vec<(String, f64)>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("scheme ") && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            match f.as_slice() {
                [name, median, _, _] => Ok((name.to_string(), median.parse().with_context(|| format!("bad row '{l}'"))?)),
                _ => bail!("bad bench row '{l}'"),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use jhpf_core::eval::BerPoint;

    fn curve(csi: &str, bers: &[(u64, u64)]) -> BerCurve {
        BerCurve {
            scheme: "dl-jhpf".into(),
            scenario: "umi-like".into(),
            csi_condition: csi.into(),
            points: bers
                .iter()
                .enumerate()
                .map(|(i, &(e, n))| BerPoint {
                    snr_db: 2.0 * i as f64,
                    bit_errors: e,
                    bits_total: n,
                    censored: false,
                })
                .collect(),
        }
    }

    #[test]
    fn area_verdicts() {
        let good = curve("perfect", &[(100, 10_000), (50, 10_000)]);
        let bad = curve("est20db", &[(400, 10_000), (300, 10_000)]);
        let close = curve("est20db", &[(101, 10_000), (49, 10_000)]);
        assert_eq!(compare_areas(&good, &bad).0, Verdict::Ordered);
        assert_eq!(compare_areas(&bad, &good).0, Verdict::Reversed);
        assert_eq!(compare_areas(&good, &close).0, Verdict::Indistinguishable);
    }

    #[test]
    fn ordering_pairs_adjacent_conditions() {
        let curves = [
            curve("perfect", &[(10, 1000)]),
            curve("est20db", &[(20, 1000)]),
            curve("est10db", &[(40, 1000)]),
        ];
        let rows = ordering_report(&curves);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].0.contains("perfect below est20db"));
        assert!(rows[1].0.contains("est20db below est10db"));
    }

    #[test]
    fn bench_report_parses() {
        let rows = parse_bench_report("# x\nscheme median_ns p95_ns flops_estimate\ndl-jhpf 1200 1500 9000\n").unwrap();
        assert_eq!(rows, vec![("dl-jhpf".to_string(), 1200.0)]);
        assert!(parse_bench_report("dl-jhpf 1 2\n").is_err());
    }
}
