//! Acceptance suite: one pass/fail line per criterion. Run with
//! `cargo test -p jhpf-cli --test acceptance` (add `--release` for speed; the test profile is
//! already optimized).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use jhpf_cli::commands::{ordering_report, parse_bench_report, Verdict, BENCH_REPORT};
use jhpf_core::channel::{gen_dataset, ScenarioParams};
use jhpf_core::eval::{ber_sweep, BerCurve, ChannelSource, CsiCondition, Scheme, SweepConfig};
use jhpf_core::jhpf::gradcheck::{closed_form_check, finite_difference_check, random_instance};
use jhpf_core::jhpf::{
    backward, detect, forward, infer, train, FrameworkParams, SystemConfig, TrainHyper, TrainOutcome, TrainSet,
    TrainingSample,
};
use jhpf_core::neural::{Activation, Mode};
use jhpf_core::phy::{snr_to_power, BitBlock};
use jhpf_core::{CMatrix, RngStream, C64};
use statrs::distribution::{ContinuousCDF, Normal};

// gradient exactness
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;
const CLOSED_FORM_TOL: f64 = 1e-10;
const CLOSED_FORM_INSTANCES: u64 = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
// constraints
const MODULUS_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-9;
// analytic oracle
const ORACLE_SNRS: [f64; 3] = [0.0, 4.0, 8.0];
const ORACLE_MIN_ERRORS: u64 = 200;
const ORACLE_SIGMAS: f64 = 3.0;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
// desk-scale training
const DESK_TRAIN: usize = 20_000;
const DESK_VAL: usize = 2_000;
const DESK_EPOCHS: usize = 50;
const BCE_RATIO: f64 = 0.5;
const RANDOM_RATIO: f64 = 0.5;
const DESK_SNRS: [f64; 3] = [8.0, 10.0, 12.0];
const DESK_BUDGET: Duration = Duration::from_secs(30 * 60);
// OFDM
const OFDM_K: usize = 8;
const GENIE_RATIO: f64 = 2.0;
// mismatch
const MISMATCH_SNRS: [f64; 7] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
// bench
const BENCH_VARIATION: f64 = 0.2;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn guarded(id: u32, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Line {
    let t0 = Instant::now();
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let line = Line {
        id,
        name,
        pass,
        detail: format!("{detail} [{:.1} s]", t0.elapsed().as_secs_f64()),
    };
    eprintln!("  finished criterion {id} in {:.1} s", t0.elapsed().as_secs_f64());
    line
}

fn gradient_exactness() -> (bool, String) {
    let t0 = Instant::now();
    let cfg = SystemConfig::narrowband(8, 4, 2, 2, 2);
    let (fp, samples) = random_instance(&cfg, 1, 4).unwrap();
    let fd = finite_difference_check(&fp, &samples, 10.0, FD_STEP).unwrap();
    let mut cf_worst = 0.0f64;
    for seed in 0..CLOSED_FORM_INSTANCES {
        let (fp, samples) = random_instance(&cfg, 100 + seed, 4).unwrap();
        let r = closed_form_check(&fp, &samples, 10.0).unwrap();
        cf_worst = cf_worst.max(r.phase_err).max(r.combiner_err);
    }
    let took = t0.elapsed();
    let pass = fd.max_rel_err < FD_TOL && cf_worst < CLOSED_FORM_TOL && took < GRAD_BUDGET;
    (
        pass,
        format!(
            "finite differences over {} params: max rel err {:.2e} (< {FD_TOL:e}); closed forms on {CLOSED_FORM_INSTANCES} instances: {:.2e} (< {CLOSED_FORM_TOL:e}); {:.1} s (< {} s)",
            fd.n_params,
            fd.max_rel_err,
            cf_worst,
            took.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    )
}

fn q_function(x: f64) -> f64 {
    1.0 - Normal::standard().cdf(x)
}

fn analytic_oracle() -> (bool, String) {
    let t0 = Instant::now();
    let cfg = SystemConfig::narrowband(4, 4, 1, 1, 1);
    let identity = vec![vec![CMatrix::identity(4)]];
    let src = ChannelSource::Dataset {
        name: "identity",
        channels: &identity,
    };
    let sw = SweepConfig {
        min_errors: ORACLE_MIN_ERRORS,
        max_trials: 10_000_000,
        ..SweepConfig::new(ORACLE_SNRS.to_vec(), 5)
    };
    let curve = ber_sweep(&Scheme::FullyDigital, &cfg, &src, &sw).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in &curve.points {
        let q = q_function(snr_to_power(p.snr_db).sqrt());
        let sigma = (q * (1.0 - q) / p.bits_total as f64).sqrt();
        let z = (p.ber() - q) / sigma;
        pass &= z.abs() <= ORACLE_SIGMAS && !p.censored;
        parts.push(format!("{} dB: {:.4e} vs Q {:.4e} ({z:+.2} sigma)", p.snr_db, p.ber(), q));
    }
    let took = t0.elapsed();
    pass &= took < ORACLE_BUDGET;
    (pass, format!("{}; {:.1} s", parts.join(", "), took.as_secs_f64()))
}

fn desk_config() -> SystemConfig {
    SystemConfig::narrowband(16, 8, 2, 2, 2)
}

fn umi() -> ScenarioParams {
    ScenarioParams::umi_like()
}

struct DeskRun {
    outcome: TrainOutcome,
    took: Duration,
}

fn desk_run() -> DeskRun {
    let cfg = desk_config();
    let t0 = Instant::now();
    let tr = gen_dataset(cfg.dims(), &umi(), 1, 100e6, 1, 0, DESK_TRAIN).unwrap();
    let va = gen_dataset(cfg.dims(), &umi(), 1, 100e6, 1, 1, DESK_VAL).unwrap();
    let hyper = TrainHyper {
        epochs: DESK_EPOCHS,
        ..TrainHyper::desk()
    };
    let outcome = train(
        &cfg,
        &TrainSet { channels: &tr, seed: 1, tag: 0 },
        &TrainSet { channels: &va, seed: 1, tag: 1 },
        &hyper,
    )
    .unwrap();
    DeskRun {
        outcome,
        took: t0.elapsed(),
    }
}

fn constraint_invariants(run: &DeskRun) -> (bool, String) {
    let bad: Vec<usize> = run
        .outcome
        .history
        .iter()
        .filter(|r| !r.constraints.within(MODULUS_TOL, POWER_TOL))
        .map(|r| r.epoch)
        .collect();
    let worst = run
        .outcome
        .history
        .iter()
        .fold(Default::default(), |a: jhpf_core::phy::ConstraintReport, r| a.merge(r.constraints));
    (
        bad.is_empty() && run.outcome.history.len() == DESK_EPOCHS + 1,
        format!(
            "{} epochs checked, violations at {:?}; worst modulus dev {:.1e} (<= {MODULUS_TOL:e}), worst power dev {:.1e} (<= {POWER_TOL:e})",
            run.outcome.history.len(),
            bad,
            worst.f_rf_modulus_dev.max(worst.w_rf_modulus_dev),
            worst.power_dev
        ),
    )
}

fn desk_sweep(scheme: &Scheme, snrs: &[f64], min_errors: u64, max_trials: u64, csi: CsiCondition) -> BerCurve {
    let sc = umi();
    let src = ChannelSource::Generated {
        scenario: &sc,
        sampling_rate_hz: 100e6,
    };
    let sw = SweepConfig {
        min_errors,
        max_trials,
        csi,
        ..SweepConfig::new(snrs.to_vec(), 77)
    };
    ber_sweep(scheme, &desk_config(), &src, &sw).unwrap()
}

fn training_efficacy(run: &DeskRun) -> (bool, String) {
    let h = &run.outcome.history;
    let (first, last) = (h[0].val_bce, h[h.len() - 1].val_bce);
    let fp = Arc::new(run.outcome.best.clone());
    let dl = desk_sweep(&Scheme::DlJhpf(fp), &DESK_SNRS, 300, 20_000, CsiCondition::Perfect);
    let rp = desk_sweep(&Scheme::RandomPhase, &DESK_SNRS, 300, 20_000, CsiCondition::Perfect);
    let bs = desk_sweep(&Scheme::BeamSweep, &DESK_SNRS, 300, 20_000, CsiCondition::Perfect);
    let ber = |c: &BerCurve, s: f64| c.point_at(s).unwrap().ber();
    let bce_ok = last <= BCE_RATIO * first;
    let random_ok = ber(&dl, 10.0) <= RANDOM_RATIO * ber(&rp, 10.0);
    let beats: Vec<f64> = DESK_SNRS.iter().copied().filter(|&s| ber(&dl, s) < ber(&bs, s)).collect();
    let budget_ok = run.took < DESK_BUDGET;
    let fmt = |c: &BerCurve| {
        DESK_SNRS
            .iter()
            .map(|&s| format!("{:.2e}", ber(c, s)))
            .collect::<Vec<_>>()
            .join("/")
    };
    (
        bce_ok && random_ok && !beats.is_empty() && budget_ok,
        format!(
            "val BCE {first:.4} -> {last:.4} (ratio {:.3} <= {BCE_RATIO}); BER at 8/10/12 dB dl-jhpf {} random-phase {} beam-sweep {}; beats beam-sweep at {beats:?} dB; training {:.0} s",
            last / first,
            fmt(&dl),
            fmt(&rp),
            fmt(&bs),
            run.took.as_secs_f64()
        ),
    )
}

fn mismatch_ordering(run: &DeskRun) -> (bool, String) {
    let fp = Arc::new(run.outcome.best.clone());
    let curves: Vec<BerCurve> = [CsiCondition::Perfect, CsiCondition::Estimated(20.0), CsiCondition::Estimated(10.0)]
        .into_iter()
        .map(|csi| desk_sweep(&Scheme::DlJhpf(fp.clone()), &MISMATCH_SNRS, 200, 20_000, csi))
        .collect();
    let rows = ordering_report(&curves);
    let pass = rows.len() == 2 && rows.iter().all(|r| r.1 != Verdict::Reversed);
    let areas: Vec<String> = curves
        .iter()
        .map(|c| {
            let (a, s) = c.area();
            format!("{} {a:.3e}+-{s:.1e}", c.csi_condition)
        })
        .collect();
    let verdicts: Vec<String> = rows
        .iter()
        .map(|(what, v, gap, sigma)| format!("{what}: {v:?} (gap {:.1} sigma)", gap / sigma))
        .collect();
    (pass, format!("areas {}; {}", areas.join(", "), verdicts.join("; ")))
}

fn same_bits_f64(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn ofdm_reduction() -> (bool, String) {
    // K = 1: the per-subcarrier and narrowband constructions must agree bit for bit
    let cfg1 = SystemConfig::narrowband(8, 4, 2, 2, 2);
    let fp = FrameworkParams::init(&cfg1, Activation::Linear, &mut RngStream::new(21, 0)).unwrap();
    let chans = gen_dataset(cfg1.dims(), &umi(), 1, 100e6, 21, 0, 32).unwrap();
    let mut s = RngStream::new(22, 0);
    let mut nb = Vec::new();
    let mut of = Vec::new();
    for h in &chans {
        let bits = BitBlock::random(2, 2, &mut s);
        let noise: Vec<C64> = (0..cfg1.n_r).map(|_| s.complex_normal(1.0)).collect();
        nb.push(TrainingSample::narrowband(h[0].clone(), bits.clone(), noise.clone()));
        of.push(TrainingSample::ofdm(h, 0, 0, bits, noise).unwrap());
    }
    let power = snr_to_power(10.0);
    let mut identical = true;
    for mode in [Mode::Train, Mode::Infer] {
        let a = forward(&fp, &nb, power, mode).unwrap();
        let b = forward(&fp, &of, power, mode).unwrap();
        identical &= a.loss.to_bits() == b.loss.to_bits();
        identical &= same_bits_f64(a.probs.as_slice().unwrap(), b.probs.as_slice().unwrap());
        if mode == Mode::Train {
            let (ga, gb) = (backward(&fp, &a.tape).unwrap(), backward(&fp, &b.tape).unwrap());
            identical &= ga.tensors().iter().zip(gb.tensors()).all(|(x, y)| same_bits_f64(x, y));
        } else {
            let hard = detect(&fp, &a.received).unwrap();
            for (k, smp) in of.iter().enumerate() {
                let got = infer(&fp, &chans[k], std::slice::from_ref(&smp.bits), std::slice::from_ref(&smp.noise), power).unwrap();
                identical &= got[0] == hard[k];
            }
        }
    }

    // K = 8: shared analog stage versus per-subcarrier analog on the same trained networks
    let cfg = SystemConfig {
        k_subcarriers: OFDM_K,
        ..desk_config()
    };
    let tr = gen_dataset(cfg.dims(), &umi(), OFDM_K, 100e6, 2, 0, 8_000).unwrap();
    let va = gen_dataset(cfg.dims(), &umi(), OFDM_K, 100e6, 2, 1, 1_000).unwrap();
    let hyper = TrainHyper {
        epochs: 30,
        lr_switch_epoch: 20,
        ..TrainHyper::desk()
    };
    let out = train(
        &cfg,
        &TrainSet { channels: &tr, seed: 2, tag: 0 },
        &TrainSet { channels: &va, seed: 2, tag: 1 },
        &hyper,
    )
    .unwrap();
    let fp = Arc::new(out.best);
    let sc = umi();
    let src = ChannelSource::Generated {
        scenario: &sc,
        sampling_rate_hz: 100e6,
    };
    let sw = SweepConfig {
        min_errors: 300,
        max_trials: 10_000,
        ..SweepConfig::new(vec![10.0], 78)
    };
    let unified = ber_sweep(&Scheme::DlJhpf(fp.clone()), &cfg, &src, &sw).unwrap().points[0].ber();
    let genie = ber_sweep(&Scheme::DlJhpfGenie(fp), &cfg, &src, &sw).unwrap().points[0].ber();
    let ratio = unified.max(genie) / unified.min(genie);
    (
        identical && ratio <= GENIE_RATIO,
        format!(
            "K = 1 bit-identical (loss, probabilities, gradients, decisions): {identical}; K = {OFDM_K} at 10 dB: unified {unified:.3e}, genie {genie:.3e}, ratio {ratio:.2} (<= {GENIE_RATIO})"
        ),
    )
}

const TINY_CONFIG: &str = "\
system.n_t=8
system.n_r=4
system.n_t_rf=2
system.n_r_rf=2
system.n_s=2
data.train=400
data.val=100
data.test=50
train.epochs=3
train.lr_switch_epoch=2
train.batch=64
train.lr=3e-3
train.lr_late=3e-4
train.phase_activation=linear
train.resample=true
eval.snr_db=0,10
eval.min_errors=50
eval.max_trials=2000
eval.channels=dataset
bench.reps=250000
bench.warmup=1000
seed.data=1
seed.init=2
seed.eval=3
run.threads=1
";

fn jhpf(config: &Path, out_dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_jhpf"))
        .arg("--config")
        .arg(config)
        .args(args)
        .arg("--set")
        .arg(format!("run.out_dir={}", out_dir.display()))
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                map.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    map
}

fn determinism(work: &Path) -> (bool, String) {
    let config = work.join("tiny.cfg");
    std::fs::write(&config, TINY_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = work.join(run);
        for cmd in ["gen-channels", "train", "eval-ber"] {
            if let Err(e) = jhpf(&config, &dir, &[cmd]) {
                return (false, format!("{cmd} failed: {}", e.trim()));
            }
        }
        outputs.push(files(&dir));
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    (
        differing.is_empty() && a.len() >= 6,
        format!(
            "{} output files from gen-channels, train and eval-ber compared across two runs; differing: {differing:?}",
            a.len()
        ),
    )
}

fn latency_bench(work: &Path) -> (bool, String) {
    let config = work.join("tiny.cfg");
    let dir = work.join("a");
    let mut runs = Vec::new();
    for _ in 0..2 {
        if let Err(e) = jhpf(&config, &dir, &["bench"]) {
            return (false, format!("bench failed: {}", e.trim()));
        }
        let text = std::fs::read_to_string(dir.join(BENCH_REPORT)).unwrap();
        runs.push(parse_bench_report(&text).unwrap());
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["dl-jhpf", "beam-sweep", "fully-digital"] {
        let get = |r: &Vec<(String, f64)>| r.iter().find(|(n, _)| n == name).map(|(_, m)| *m);
        match (get(&runs[0]), get(&runs[1])) {
            (Some(m1), Some(m2)) => {
                let var = (m1 - m2).abs() / m1.min(m2);
                pass &= var < BENCH_VARIATION;
                parts.push(format!("{name} {m1:.0}/{m2:.0} ns ({:.1}%)", 100.0 * var));
            }
            _ => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    (pass, format!("medians of two runs: {}", parts.join(", ")))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // cargo passes harness flags such as --list; a bare listing needs no work
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let mut lines = vec![
        guarded(1, "gradient exactness", gradient_exactness),
        guarded(3, "analytic BER oracle", analytic_oracle),
        guarded(7, "determinism", || determinism(work.path())),
        guarded(8, "latency bench", || latency_bench(work.path())),
    ];
    let t0 = Instant::now();
    match catch_unwind(desk_run) {
        Ok(run) => {
            eprintln!("  desk training run took {:.1} s", t0.elapsed().as_secs_f64());
            lines.push(guarded(2, "constraint invariants", || constraint_invariants(&run)));
            lines.push(guarded(4, "desk-scale training efficacy", || training_efficacy(&run)));
            lines.push(guarded(6, "mismatch ordering", || mismatch_ordering(&run)));
        }
        Err(_) => {
            for (id, name) in [(2, "constraint invariants"), (4, "desk-scale training efficacy"), (6, "mismatch ordering")] {
                lines.push(Line {
                    id,
                    name,
                    pass: false,
                    detail: "desk training run panicked".into(),
                });
            }
        }
    }
    lines.push(guarded(5, "OFDM reduction", ofdm_reduction));
    lines.sort_by_key(|l| l.id);
    println!();
    for l in &lines {
        println!(
            "criterion {} {:<30} {}  {}",
            l.id,
            l.name,
            if l.pass { "PASS" } else { "FAIL" },
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("\nacceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
