use rayon::prelude::*;

use super::model::{backward, forward, TrainingSample};
use super::{FrameworkParams, SystemConfig};
use crate::channel::domain;
use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, Mode};
use crate::numerics::{CMatrix, RngStream};
use crate::phy::{snr_to_power, BitBlock, ConstraintReport};

/// Channels of one data split plus the seed that regenerates its bits, noise and
/// subcarrier choices. Sample `n` always pairs with the same draws.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    /// Per sample, the channel on each of the K subcarriers.
    pub channels: &'a [Vec<CMatrix>],
    pub seed: u64,
    pub tag: u64,
}

impl TrainSet<'_> {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

/// Builds the training tuples for the given sample indices. With `round = Some(e)` the
/// bits, noise and subcarrier are redrawn for pass `e`; `None` gives the fixed draws.
pub fn training_batch(cfg: &SystemConfig, set: &TrainSet, indices: &[usize], round: Option<u64>) -> Result<Vec<TrainingSample>> {
    indices
        .iter()
        .map(|&n| {
            let h_set = set
                .channels
                .get(n)
                .ok_or_else(|| Error::input(format!("sample {n} out of range")))?;
            let path = |d: u64| match round {
                None => RngStream::for_path(set.seed, &[d, set.tag, n as u64]),
                Some(e) => RngStream::for_path(set.seed, &[d, set.tag, n as u64, e]),
            };
            let bits = BitBlock::random(cfg.n_s, cfg.bits_per_symbol(), &mut path(domain::BITS));
            let mut ns = path(domain::NOISE);
            let noise = (0..cfg.n_r).map(|_| ns.complex_normal(1.0)).collect();
            if cfg.k_subcarriers == 1 {
                Ok(TrainingSample::narrowband(h_set[0].clone(), bits, noise))
            } else {
                let i = path(domain::SUBCARRIER).below(cfg.k_subcarriers);
                TrainingSample::ofdm(h_set, cfg.anchor_subcarrier_q, i, bits, noise)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_late: f64,
    /// Epochs run at `lr` before switching to `lr_late`.
    pub lr_switch_epoch: usize,
    pub train_snr_db: f64,
    pub phase_activation: Activation,
    pub init_seed: u64,
    /// Redraw bits and noise every epoch instead of reusing one draw per sample.
    pub resample_each_epoch: bool,
}

impl Default for TrainHyper {
    /// The reference schedule: 800 epochs, 1e-3 for 500 of them then 1e-4, batch 256.
    fn default() -> Self {
        TrainHyper {
            epochs: 800,
            batch_size: 256,
            lr: 1e-3,
            lr_late: 1e-4,
            lr_switch_epoch: 500,
            train_snr_db: 10.0,
            phase_activation: Activation::Relu,
            init_seed: 0,
            resample_each_epoch: false,
        }
    }
}

impl TrainHyper {
    /// Short schedule for small systems and datasets: 50 epochs at 3e-3 then 3e-4, batch 128,
    /// unbounded phase outputs and fresh bits and noise every epoch. With one fixed draw per
    /// sample the small training set is memorised within a few dozen epochs.
    pub fn desk() -> Self {
        TrainHyper {
            epochs: 50,
            batch_size: 128,
            lr: 3e-3,
            lr_late: 3e-4,
            lr_switch_epoch: 35,
            train_snr_db: 10.0,
            phase_activation: Activation::Linear,
            init_seed: 0,
            resample_each_epoch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(Error::Config("need at least one epoch and a batch of two".into()));
        }
        if self.lr_switch_epoch > self.epochs {
            return Err(Error::Config(format!(
                "learning-rate switch at epoch {} is after the last epoch {}",
                self.lr_switch_epoch, self.epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr_late > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_switch_epoch {
            self.lr
        } else {
            self.lr_late
        }
    }
}

/// Row of the training history. Epoch 0 describes the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_bce: f64,
    pub val_bce: f64,
    pub val_ber: f64,
    /// Worst constraint deviation over every weight emitted during the epoch.
    pub constraints: ConstraintReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation BCE (epoch 0 included).
    pub best: FrameworkParams,
    pub best_epoch: usize,
    pub last: FrameworkParams,
    pub history: Vec<EpochRecord>,
}

const EVAL_CHUNK: usize = 256;

/// Inference-mode BCE and 0.5-threshold BER over a whole split.
pub fn evaluate(fp: &FrameworkParams, set: &TrainSet, power: f64) -> Result<(f64, f64, ConstraintReport)> {
    let indices: Vec<usize> = (0..set.len()).collect();
    let parts = indices
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let samples = training_batch(&fp.cfg, set, chunk, None)?;
            let out = forward(fp, &samples, power, Mode::Infer)?;
            let errors: usize = out
                .probs
                .iter()
                .zip(out.tape.targets.iter())
                .filter(|(&p, &t)| ((p >= 0.5) as u8 as f64) != t)
                .count();
            let cons = out
                .weights
                .iter()
                .fold(ConstraintReport::default(), |acc, w| acc.merge(w.constraints()));
            Ok((out.loss * chunk.len() as f64, errors, out.probs.len(), cons))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut loss, mut errors, mut bits, mut cons) = (0.0, 0usize, 0usize, ConstraintReport::default());
    for (l, e, b, c) in parts {
        loss += l;
        errors += e;
        bits += b;
        cons = cons.merge(c);
    }
    Ok((loss / set.len() as f64, errors as f64 / bits as f64, cons))
}

fn initial_params(cfg: &SystemConfig, set: &TrainSet, hyper: &TrainHyper, power: f64) -> Result<FrameworkParams> {
    let probe: Vec<usize> = (0..set.len().min(64)).collect();
    let samples = training_batch(cfg, set, &probe, None)?;
    for attempt in 0..8 {
        let mut rng = RngStream::for_path(hyper.init_seed, &[domain::INIT, attempt]);
        let fp = FrameworkParams::init(cfg, hyper.phase_activation, &mut rng)?;
        match forward(&fp, &samples, power, Mode::Infer) {
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
            Ok(_) => return Ok(fp),
        }
    }
    Err(Error::Degenerate("eight initializations in a row produced a zero digital precoder".into()))
}

/// Mini-batch Adam on the batch BCE. Deterministic for fixed seeds and any thread count.
pub fn train(cfg: &SystemConfig, train_set: &TrainSet, val_set: &TrainSet, hyper: &TrainHyper) -> Result<TrainOutcome> {
    cfg.validate()?;
    hyper.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::input("training and validation sets must be nonempty"));
    }
    let power = snr_to_power(hyper.train_snr_db);
    let mut fp = initial_params(cfg, train_set, hyper, power)?;
    let mut adam = Adam::new(&fp.tensors());

    let (train0, _, _) = evaluate(&fp, train_set, power)?;
    let (val0, ber0, cons0) = evaluate(&fp, val_set, power)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_bce: train0,
        val_bce: val0,
        val_ber: ber0,
        constraints: cons0,
    }];
    let (mut best, mut best_epoch, mut best_val) = (fp.clone(), 0, val0);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=hyper.epochs {
        let lr = hyper.lr_at(epoch);
        RngStream::for_path(hyper.init_seed, &[domain::SHUFFLE, epoch as u64]).shuffle(&mut order);
        let mut cons = ConstraintReport::default();
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let round = hyper.resample_each_epoch.then_some(epoch as u64);
            let samples = training_batch(cfg, train_set, chunk, round)?;
            let out = forward(&fp, &samples, power, Mode::Train)?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("training loss became {}", out.loss),
                });
            }
            for w in &out.weights {
                cons = cons.merge(w.constraints());
            }
            loss_sum += out.loss * chunk.len() as f64;
            seen += chunk.len();
            let grads = backward(&fp, &out.tape)?;
            adam.step(&mut fp.tensors_mut(), &grads.tensors(), lr)?;
            fp.touch();
            let t = &out.tape;
            fp.pp.update_running_stats(&t.design.pp);
            fp.cp.update_running_stats(&t.design.cp);
            fp.re_dp.update_running_stats(&t.design.re_dp);
            fp.im_dp.update_running_stats(&t.design.im_dp);
            fp.re_dc.update_running_stats(&t.design.re_dc);
            fp.im_dc.update_running_stats(&t.design.im_dc);
            fp.demod.update_running_stats(&t.demod);
        }
        let (val_bce, val_ber, val_cons) = evaluate(&fp, val_set, power)?;
        if !val_bce.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("validation BCE became {val_bce}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_bce: loss_sum / seen.max(1) as f64,
            val_bce,
            val_ber,
            constraints: cons.merge(val_cons),
        });
        if val_bce < best_val {
            best_val = val_bce;
            best_epoch = epoch;
            best = fp.clone();
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: fp,
        history,
    })
}

/// `epoch,train_bce,val_bce,val_ber` rows.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_bce,val_bce,val_ber\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_bce, r.val_bce, r.val_ber));
    }
    s
}
