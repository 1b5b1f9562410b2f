//! Flat `section.key=value` run configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored. Every key is
//! listed in [`KEYS`] together with its default (keys without a default are required).

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use jhpf_core::channel::ScenarioParams;
use jhpf_core::eval::CsiCondition;
use jhpf_core::jhpf::{SystemConfig, TrainHyper};
use jhpf_core::neural::Activation;

pub struct KeySpec {
    pub key: &'static str,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn req(key: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, default: None, help }
}

const fn opt(key: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, default: Some(default), help }
}

pub const KEYS: &[KeySpec] = &[
    req("system.n_t", "transmit antennas"),
    req("system.n_r", "receive antennas"),
    req("system.n_t_rf", "transmit RF chains"),
    req("system.n_r_rf", "receive RF chains"),
    req("system.n_s", "data streams, at most min(n_t_rf, n_r_rf)"),
    opt("system.m_order", "4", "constellation size (QPSK only)"),
    opt("system.k_subcarriers", "1", "subcarriers; 1 is narrowband"),
    opt("system.anchor_q", "0", "subcarrier whose channel designs the shared analog stage"),
    opt("scenario.train", "umi-like", "channel preset for training and validation data"),
    opt("scenario.test", "umi-like", "channel preset for test data, eval-ber and the shifted half of mismatch"),
    opt("scenario.sampling_rate_hz", "100e6", "sampling rate of the wideband channel"),
    opt("data.train", "20000", "training channels"),
    opt("data.val", "2000", "validation channels"),
    opt("data.test", "2000", "test channels"),
    opt("train.epochs", "800", "passes over the training set"),
    opt("train.batch", "256", "mini-batch size"),
    opt("train.lr", "1e-3", "Adam step size before the switch"),
    opt("train.lr_late", "1e-4", "Adam step size after the switch"),
    opt("train.lr_switch_epoch", "500", "last epoch run at train.lr"),
    opt("train.snr_db", "10", "SNR of the simulated link during training"),
    opt("train.phase_activation", "relu", "phase-network output: relu, tanh or linear"),
    opt("train.resample", "false", "redraw bits and noise every epoch"),
    opt("eval.schemes", "fully-digital,beam-sweep,random-phase,dl-jhpf", "schemes evaluated by eval-ber"),
    opt("eval.snr_db", "0,2,4,6,8,10,12", "SNR grid in dB"),
    opt("eval.min_errors", "100", "bit errors that end an SNR point"),
    opt("eval.max_trials", "100000", "trial cap per SNR point"),
    opt("eval.csi", "perfect", "perfect, or estNdb for an estimate at N dB"),
    opt("eval.channels", "generated", "generated (fresh draws) or dataset (test.chan)"),
    opt("gradcheck.batch", "4", "samples in the finite-difference batch"),
    opt("gradcheck.step", "1e-6", "central-difference step"),
    opt("gradcheck.snr_db", "10", "link SNR during the check"),
    opt("bench.reps", "1000", "timed design calls per scheme"),
    opt("bench.warmup", "100", "untimed calls before timing"),
    opt("bench.channels", "64", "channels cycled through by the bench"),
    req("seed.data", "channels, bits and noise of the datasets"),
    req("seed.init", "network initialization, shuffling and gradient-check instances"),
    req("seed.eval", "Monte-Carlo draws of eval-ber, mismatch and bench"),
    opt("run.threads", "1", "worker threads, 0 for all cores; results do not depend on it"),
    opt("run.out_dir", "out", "directory for every output file"),
];

/// Table of keys and defaults for `--help`.
pub fn key_table() -> String {
    let mut s = String::from("Configuration keys (key=value, one per line):\n");
    for k in KEYS {
        let d = k.default.map_or("required".to_string(), |d| format!("default {d}"));
        s.push_str(&format!("  {:<26} {:<40} [{d}]\n", k.key, k.help));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalChannels {
    Generated,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub schemes: Vec<String>,
    pub snr_db: Vec<f64>,
    pub min_errors: u64,
    pub max_trials: u64,
    pub csi: CsiCondition,
    pub channels: EvalChannels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSettings {
    pub batch: usize,
    pub step: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSettings {
    pub reps: usize,
    pub warmup: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub scenario_train: ScenarioParams,
    pub scenario_test: ScenarioParams,
    pub sampling_rate_hz: f64,
    pub data: DataSizes,
    /// `init_seed` mirrors `seeds.init`.
    pub hyper: TrainHyper,
    pub eval: EvalSettings,
    pub gradcheck: GradCheckSettings,
    pub bench: BenchSettings,
    pub seeds: Seeds,
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Every key in [`KEYS`] order with its resolved text.
    resolved: Vec<(&'static str, String)>,
}

pub const SCHEMES: [&str; 5] = ["fully-digital", "beam-sweep", "random-phase", "dl-jhpf", "dl-jhpf-genie"];

/// Where a value came from, for error messages.
#[derive(Debug, Clone)]
struct Origin(String);

struct Values {
    map: BTreeMap<&'static str, (String, Origin)>,
}

impl Values {
    fn raw(&self, key: &'static str) -> (&str, &Origin) {
        let (v, o) = &self.map[key];
        (v.as_str(), o)
    }

    fn get<T: std::str::FromStr>(&self, key: &'static str, what: &str) -> Result<T, ConfigError> {
        let (v, o) = self.raw(key);
        v.parse()
            .map_err(|_| ConfigError(format!("{}: key '{key}': expected {what}, got '{v}'", o.0)))
    }

    fn positive(&self, key: &'static str) -> Result<usize, ConfigError> {
        let n: usize = self.get(key, "a non-negative integer")?;
        if n == 0 {
            let (_, o) = self.raw(key);
            return Err(ConfigError(format!("{}: key '{key}': must be positive", o.0)));
        }
        Ok(n)
    }

    fn fail(&self, key: &'static str, msg: impl fmt::Display) -> ConfigError {
        let (v, o) = self.raw(key);
        ConfigError(format!("{}: key '{key}': {msg} (got '{v}')", o.0))
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

pub fn parse_csi(v: &str) -> Option<CsiCondition> {
    if v == "perfect" {
        return Some(CsiCondition::Perfect);
    }
    let db: f64 = v.strip_prefix("est")?.strip_suffix("db")?.parse().ok()?;
    db.is_finite().then_some(CsiCondition::Estimated(db))
}

fn parse_activation(v: &str) -> Option<Activation> {
    match v {
        "relu" => Some(Activation::Relu),
        "tanh" => Some(Activation::TanhPi),
        "linear" => Some(Activation::Linear),
        _ => None,
    }
}

fn assignments<'a>(
    text: &'a str,
    origin: impl Fn(usize) -> String + 'a,
) -> impl Iterator<Item = Result<(&'static str, String, Origin), ConfigError>> + 'a {
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        let at = origin(i + 1);
        let Some((k, v)) = line.split_once('=') else {
            return Some(Err(ConfigError(format!("{at}: expected key=value, got '{line}'"))));
        };
        let k = k.trim();
        let Some(spec) = KEYS.iter().find(|s| s.key == k) else {
            return Some(Err(ConfigError(format!("{at}: unknown key '{k}'"))));
        };
        Some(Ok((spec.key, v.trim().to_string(), Origin(at))))
    })
}

/// Parses a configuration file. See [`parse_with_overrides`].
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, &[])
}

/// Parses `text`, then applies `key=value` overrides in order. Keys may appear once per
/// file; overrides replace file values.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for a in assignments(text, |n| format!("line {n}")) {
        let (k, v, o) = a?;
        if let Some((_, first)) = map.insert(k, (v, o.clone())) {
            return Err(ConfigError(format!("{}: key '{k}' already set at {}", o.0, first.0)));
        }
    }
    for (i, ov) in overrides.iter().enumerate() {
        for a in assignments(ov, |_| format!("override {}", i + 1)) {
            let (k, v, o) = a?;
            map.insert(k, (v, o));
        }
    }
    let missing: Vec<&str> = KEYS
        .iter()
        .filter(|s| s.default.is_none() && !map.contains_key(s.key))
        .map(|s| s.key)
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError(format!("missing required keys: {}", missing.join(", "))));
    }
    for s in KEYS {
        if let Some(d) = s.default {
            map.entry(s.key)
                .or_insert_with(|| (d.to_string(), Origin(format!("default of {}", s.key))));
        }
    }
    build(Values { map })
}

fn build(v: Values) -> Result<RunConfig, ConfigError> {
    let system = SystemConfig {
        n_t: v.positive("system.n_t")?,
        n_r: v.positive("system.n_r")?,
        n_t_rf: v.positive("system.n_t_rf")?,
        n_r_rf: v.positive("system.n_r_rf")?,
        n_s: v.positive("system.n_s")?,
        m_order: v.get("system.m_order", "an integer")?,
        k_subcarriers: v.positive("system.k_subcarriers")?,
        anchor_subcarrier_q: v.get("system.anchor_q", "an integer")?,
    };
    system
        .validate()
        .map_err(|e| ConfigError(format!("system.*: {e}")))?;

    let scenario = |key| {
        let (name, _) = v.raw(key);
        ScenarioParams::preset(name).map_err(|e| v.fail(key, e))
    };
    let scenario_train = scenario("scenario.train")?;
    let scenario_test = scenario("scenario.test")?;
    let sampling_rate_hz: f64 = v.get("scenario.sampling_rate_hz", "a number")?;
    if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
        return Err(v.fail("scenario.sampling_rate_hz", "must be positive"));
    }

    let data = DataSizes {
        train: v.positive("data.train")?,
        val: v.positive("data.val")?,
        test: v.positive("data.test")?,
    };
    let seeds = Seeds {
        data: v.get("seed.data", "an unsigned integer")?,
        init: v.get("seed.init", "an unsigned integer")?,
        eval: v.get("seed.eval", "an unsigned integer")?,
    };

    let hyper = TrainHyper {
        epochs: v.positive("train.epochs")?,
        batch_size: v.positive("train.batch")?,
        lr: v.get("train.lr", "a number")?,
        lr_late: v.get("train.lr_late", "a number")?,
        lr_switch_epoch: v.get("train.lr_switch_epoch", "an integer")?,
        train_snr_db: v.get("train.snr_db", "a number")?,
        phase_activation: parse_activation(v.raw("train.phase_activation").0)
            .ok_or_else(|| v.fail("train.phase_activation", "expected relu, tanh or linear"))?,
        init_seed: seeds.init,
        resample_each_epoch: parse_bool(v.raw("train.resample").0)
            .ok_or_else(|| v.fail("train.resample", "expected true or false"))?,
    };
    hyper
        .validate()
        .map_err(|e| ConfigError(format!("train.*: {e}")))?;
    if !hyper.train_snr_db.is_finite() {
        return Err(v.fail("train.snr_db", "must be finite"));
    }

    let schemes: Vec<String> = v
        .raw("eval.schemes")
        .0
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if let Some(bad) = schemes.iter().find(|s| !SCHEMES.contains(&s.as_str())) {
        return Err(v.fail("eval.schemes", format!("unknown scheme '{bad}', expected {}", SCHEMES.join("|"))));
    }
    let snr_db = v
        .raw("eval.snr_db")
        .0
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| v.fail("eval.snr_db", "expected comma-separated numbers"))?;
    let eval = EvalSettings {
        schemes,
        snr_db,
        min_errors: v.get("eval.min_errors", "an unsigned integer")?,
        max_trials: v.positive("eval.max_trials")? as u64,
        csi: parse_csi(v.raw("eval.csi").0).ok_or_else(|| v.fail("eval.csi", "expected perfect or estNdb"))?,
        channels: match v.raw("eval.channels").0 {
            "generated" => EvalChannels::Generated,
            "dataset" => EvalChannels::Dataset,
            _ => return Err(v.fail("eval.channels", "expected generated or dataset")),
        },
    };

    let gradcheck = GradCheckSettings {
        batch: v.positive("gradcheck.batch")?,
        step: v.get("gradcheck.step", "a number")?,
        snr_db: v.get("gradcheck.snr_db", "a number")?,
    };
    if gradcheck.batch < 2 {
        return Err(v.fail("gradcheck.batch", "batch normalisation needs at least two samples"));
    }
    if !(gradcheck.step > 0.0) {
        return Err(v.fail("gradcheck.step", "must be positive"));
    }
    let bench = BenchSettings {
        reps: v.positive("bench.reps")?,
        warmup: v.get("bench.warmup", "an integer")?,
        channels: v.positive("bench.channels")?,
    };

    let resolved = KEYS.iter().map(|s| (s.key, v.raw(s.key).0.to_string())).collect();
    Ok(RunConfig {
        system,
        scenario_train,
        scenario_test,
        sampling_rate_hz,
        data,
        hyper,
        eval,
        gradcheck,
        bench,
        seeds,
        threads: v.get("run.threads", "an integer")?,
        out_dir: PathBuf::from(v.raw("run.out_dir").0),
        resolved,
    })
}

impl RunConfig {
    /// Every key with its resolved value, in the canonical order. Parsing this text yields
    /// the same configuration.
    pub fn to_text(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// The keys that affect results (everything outside `run.*`), used for the checkpoint
    /// digest so that output location and thread count do not change artifacts.
    pub fn semantic_text(&self) -> String {
        self.resolved
            .iter()
            .filter(|(k, _)| !k.starts_with("run."))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn seed_line(&self) -> String {
        format!(
            "seeds data={} init={} eval={}",
            self.seeds.data, self.seeds.init, self.seeds.eval
        )
    }
}
