//! Shared fixtures for the criterion benches.

use jhpf_core::channel::{gen_dataset, ScenarioParams};
use jhpf_core::jhpf::{training_batch, FrameworkParams, SystemConfig, TrainSet, TrainingSample};
use jhpf_core::neural::Activation;
use jhpf_core::{CMatrix, RngStream};

/// 16x8 antennas, two RF chains and two streams.
pub fn desk_config() -> SystemConfig {
    SystemConfig::narrowband(16, 8, 2, 2, 2)
}

/// `count` umi-like channels (first subcarrier only).
pub fn channels(cfg: &SystemConfig, count: usize) -> Vec<CMatrix> {
    gen_dataset(cfg.dims(), &ScenarioParams::umi_like(), 1, 100e6, 11, 0, count)
        .expect("preset scenario is valid")
        .into_iter()
        .map(|mut k| k.swap_remove(0))
        .collect()
}

pub fn untrained(cfg: &SystemConfig) -> FrameworkParams {
    FrameworkParams::init(cfg, Activation::Linear, &mut RngStream::new(12, 0)).expect("valid config")
}

/// One training batch of `size` samples.
pub fn batch(cfg: &SystemConfig, size: usize) -> Vec<TrainingSample> {
    let chans: Vec<Vec<CMatrix>> = channels(cfg, size).into_iter().map(|h| vec![h]).collect();
    let set = TrainSet {
        channels: &chans,
        seed: 13,
        tag: 0,
    };
    let idx: Vec<usize> = (0..size).collect();
    training_batch(cfg, &set, &idx, None).expect("indices in range")
}
