use jhpf_core::channel::{gen_dataset, ScenarioParams};
use jhpf_core::jhpf::{infer, train, FrameworkParams, SystemConfig, TrainHyper, TrainSet};
use jhpf_core::neural::{config_digest, Activation};
use jhpf_core::phy::{snr_to_power, BitBlock};
use jhpf_core::{RngStream, C64};

fn small() -> SystemConfig {
    SystemConfig::narrowband(8, 4, 2, 2, 2)
}

fn channels(cfg: &SystemConfig, tag: u64, count: usize) -> Vec<Vec<jhpf_core::CMatrix>> {
    gen_dataset(cfg.dims(), &ScenarioParams::umi_like(), cfg.k_subcarriers, 100e6, 5, tag, count).unwrap()
}

fn checkpoint_bytes(fp: &FrameworkParams) -> Vec<u8> {
    let mut buf = Vec::new();
    fp.to_checkpoint(config_digest("test")).write_to(&mut buf).unwrap();
    buf
}

#[test]
fn training_is_reproducible() {
    let cfg = small();
    let tr = channels(&cfg, 0, 300);
    let va = channels(&cfg, 1, 100);
    let hyper = TrainHyper {
        epochs: 3,
        lr_switch_epoch: 2,
        ..TrainHyper::desk()
    };
    let run = || {
        let set = TrainSet { channels: &tr, seed: 9, tag: 0 };
        let val = TrainSet { channels: &va, seed: 9, tag: 1 };
        train(&cfg, &set, &val, &hyper).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(checkpoint_bytes(&a.best), checkpoint_bytes(&b.best));
    assert_eq!(checkpoint_bytes(&a.last), checkpoint_bytes(&b.last));
}

#[test]
fn training_beats_the_initialization() {
    let cfg = small();
    let tr = channels(&cfg, 0, 2000);
    let va = channels(&cfg, 1, 500);
    let hyper = TrainHyper {
        epochs: 15,
        lr_switch_epoch: 10,
        ..TrainHyper::desk()
    };
    let out = train(
        &cfg,
        &TrainSet { channels: &tr, seed: 3, tag: 0 },
        &TrainSet { channels: &va, seed: 3, tag: 1 },
        &hyper,
    )
    .unwrap();
    let first = &out.history[0];
    let best = &out.history[out.best_epoch];
    assert!(out.best_epoch > 0);
    assert!(best.val_bce < 0.5 * first.val_bce, "{} vs {}", best.val_bce, first.val_bce);
    assert!(best.val_ber < first.val_ber);
    for rec in &out.history {
        assert!(rec.constraints.within(1e-12, 1e-9), "epoch {}: {:?}", rec.epoch, rec.constraints);
    }
}

#[test]
fn a_small_channel_set_is_memorised() {
    let cfg = small();
    let few = channels(&cfg, 0, 32);
    let repeated: Vec<_> = few.iter().cycle().take(256).cloned().collect();
    let set = TrainSet { channels: &repeated, seed: 1, tag: 0 };
    let hyper = TrainHyper {
        epochs: 200,
        lr_switch_epoch: 150,
        batch_size: 32,
        train_snr_db: 30.0,
        resample_each_epoch: false,
        ..TrainHyper::desk()
    };
    let out = train(&cfg, &set, &set, &hyper).unwrap();
    assert_eq!(out.history[out.best_epoch].val_ber, 0.0);
}

#[test]
fn inference_returns_one_block_per_subcarrier() {
    let cfg = SystemConfig {
        k_subcarriers: 4,
        anchor_subcarrier_q: 2,
        ..small()
    };
    let fp = FrameworkParams::init(&cfg, Activation::Relu, &mut RngStream::new(4, 0)).unwrap();
    let h = channels(&cfg, 0, 1).pop().unwrap();
    let mut s = RngStream::new(8, 0);
    let bits: Vec<BitBlock> = (0..4).map(|_| BitBlock::random(cfg.n_s, 2, &mut s)).collect();
    let noise: Vec<Vec<C64>> = (0..4).map(|_| vec![C64::new(0.0, 0.0); cfg.n_r]).collect();
    let out = infer(&fp, &h, &bits, &noise, snr_to_power(10.0)).unwrap();
    assert_eq!(out.len(), 4);
    for b in &out {
        assert_eq!((b.n_s(), b.bits_per_symbol()), (cfg.n_s, 2));
    }
    assert!(infer(&fp, &h[..3], &bits[..3], &noise[..3], 1.0).is_err());
}
