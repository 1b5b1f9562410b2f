//! The end-to-end hybrid processing framework: six networks design the analog and digital
//! precoder/combiner from channel state, a fixed signal-flow layer simulates the link and a
//! seventh network demodulates. Everything between the networks is differentiated by hand
//! in [`model`].

pub mod gradcheck;
mod infer;
pub mod layers;
pub mod model;
mod train;

pub use infer::{design, design_genie, detect, infer};
pub use layers::{equivalent_channel, normalize_precoder, phases_to_analog, stack_real, unstack_real};
pub use model::{backward, forward, ForwardOutput, FrameworkGrads, JhpfTape, TrainingSample};
pub use train::{
    evaluate, history_csv, train, training_batch, EpochRecord, TrainHyper, TrainOutcome, TrainSet,
};

use crate::error::{Error, Result};
use crate::neural::{Activation, Checkpoint, MlpSpec, NamedNet, NetParams};
use crate::numerics::RngStream;
use crate::phy::bits_per_symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemConfig {
    pub n_t: usize,
    pub n_r: usize,
    pub n_t_rf: usize,
    pub n_r_rf: usize,
    pub n_s: usize,
    pub m_order: usize,
    /// 1 means narrowband.
    pub k_subcarriers: usize,
    /// Subcarrier whose channel drives the shared analog stage.
    pub anchor_subcarrier_q: usize,
}

impl SystemConfig {
    pub fn narrowband(n_t: usize, n_r: usize, n_t_rf: usize, n_r_rf: usize, n_s: usize) -> Self {
        SystemConfig {
            n_t,
            n_r,
            n_t_rf,
            n_r_rf,
            n_s,
            m_order: crate::phy::QPSK,
            k_subcarriers: 1,
            anchor_subcarrier_q: 0,
        }
    }

    /// 32x16 antennas, three RF chains and streams each.
    pub fn paper() -> Self {
        Self::narrowband(32, 16, 3, 3, 3)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.n_t, self.n_r, self.n_t_rf, self.n_r_rf, self.n_s, self.k_subcarriers];
        if positive.contains(&0) {
            return Err(Error::Config(format!("all system dimensions must be positive: {self:?}")));
        }
        if self.n_t_rf > self.n_t {
            return Err(Error::Config(format!(
                "n_t_rf = {} exceeds n_t = {}",
                self.n_t_rf, self.n_t
            )));
        }
        if self.n_r_rf > self.n_r {
            return Err(Error::Config(format!(
                "n_r_rf = {} exceeds n_r = {}",
                self.n_r_rf, self.n_r
            )));
        }
        if self.n_s > self.n_t_rf.min(self.n_r_rf) {
            return Err(Error::Config(format!(
                "n_s = {} exceeds min(n_t_rf, n_r_rf) = {}",
                self.n_s,
                self.n_t_rf.min(self.n_r_rf)
            )));
        }
        if self.anchor_subcarrier_q >= self.k_subcarriers {
            return Err(Error::Config(format!(
                "anchor subcarrier {} is outside 0..{}",
                self.anchor_subcarrier_q, self.k_subcarriers
            )));
        }
        bits_per_symbol(self.m_order)?;
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        bits_per_symbol(self.m_order).expect("validated")
    }

    pub fn bits_per_block(&self) -> usize {
        self.n_s * self.bits_per_symbol()
    }

    pub fn dims(&self) -> crate::channel::AntennaDims {
        crate::channel::AntennaDims {
            n_t: self.n_t,
            n_r: self.n_r,
        }
    }

    fn to_words(self) -> Vec<u32> {
        [
            self.n_t,
            self.n_r,
            self.n_t_rf,
            self.n_r_rf,
            self.n_s,
            self.m_order,
            self.k_subcarriers,
            self.anchor_subcarrier_q,
        ]
        .iter()
        .map(|&v| v as u32)
        .collect()
    }

    fn from_words(w: &[u32]) -> Result<Self> {
        if w.len() != 8 {
            return Err(Error::Format(format!(
                "checkpoint carries {} system words, expected 8",
                w.len()
            )));
        }
        let w: Vec<usize> = w.iter().map(|&v| v as usize).collect();
        let cfg = SystemConfig {
            n_t: w[0],
            n_r: w[1],
            n_t_rf: w[2],
            n_r_rf: w[3],
            n_s: w[4],
            m_order: w[5],
            k_subcarriers: w[6],
            anchor_subcarrier_q: w[7],
        };
        cfg.validate()
            .map_err(|e| Error::Format(format!("checkpoint system config: {e}")))?;
        Ok(cfg)
    }
}

/// Hidden widths of the reference architecture (32x16 antennas, 3 RF chains, 3 streams).
pub mod reference_widths {
    pub const PP: [usize; 3] = [512, 256, 128];
    pub const CP: [usize; 4] = [512, 256, 128, 64];
    pub const DIGITAL: [usize; 3] = [20, 40, 20];
    pub const DEMOD: [usize; 3] = [20, 50, 20];
}

/// Reference widths scaled by the ratio of input sizes, never below 16 units. The
/// reference system itself keeps the widths unchanged.
fn scaled(widths: &[usize], input: usize, reference_input: usize) -> Vec<usize> {
    if input == reference_input {
        return widths.to_vec();
    }
    let ratio = input as f64 / reference_input as f64;
    widths
        .iter()
        .map(|&w| ((w as f64 * ratio).round() as usize).max(16))
        .collect()
}

pub const NET_NAMES: [&str; 7] = ["pp", "cp", "re_dp", "im_dp", "re_dc", "im_dc", "demod"];

/// Layer specs for the seven networks, in [`NET_NAMES`] order.
pub fn network_specs(cfg: &SystemConfig, phase_activation: Activation) -> Result<Vec<MlpSpec>> {
    cfg.validate()?;
    let r = SystemConfig::paper();
    let chan_in = 2 * cfg.n_t * cfg.n_r;
    let eq_in = 2 * cfg.n_t_rf * cfg.n_r_rf;
    let sizes = |input: usize, hidden: Vec<usize>, output: usize| {
        let mut v = vec![input];
        v.extend(hidden);
        v.push(output);
        v
    };
    let chan_ref = 2 * r.n_t * r.n_r;
    let eq_ref = 2 * r.n_t_rf * r.n_r_rf;
    let pp = sizes(chan_in, scaled(&reference_widths::PP, chan_in, chan_ref), cfg.n_t * cfg.n_t_rf);
    let cp = sizes(chan_in, scaled(&reference_widths::CP, chan_in, chan_ref), cfg.n_r * cfg.n_r_rf);
    let digital = scaled(&reference_widths::DIGITAL, eq_in, eq_ref);
    let dp = sizes(eq_in, digital.clone(), cfg.n_t_rf * cfg.n_s);
    let dc = sizes(eq_in, digital, cfg.n_r_rf * cfg.n_s);
    let demod = sizes(
        2 * cfg.n_s,
        scaled(&reference_widths::DEMOD, 2 * cfg.n_s, 2 * r.n_s),
        cfg.bits_per_block(),
    );
    Ok(vec![
        MlpSpec::new(pp, phase_activation),
        MlpSpec::new(cp, phase_activation),
        MlpSpec::new(dp.clone(), Activation::Linear),
        MlpSpec::new(dp, Activation::Linear),
        MlpSpec::new(dc.clone(), Activation::Linear),
        MlpSpec::new(dc, Activation::Linear),
        MlpSpec::new(demod, Activation::Sigmoid),
    ])
}

/// Parameters of all seven networks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkParams {
    pub cfg: SystemConfig,
    pub pp: NetParams,
    pub cp: NetParams,
    pub re_dp: NetParams,
    pub im_dp: NetParams,
    pub re_dc: NetParams,
    pub im_dc: NetParams,
    pub demod: NetParams,
}

impl FrameworkParams {
    pub fn init(cfg: &SystemConfig, phase_activation: Activation, rng: &mut RngStream) -> Result<Self> {
        let specs = network_specs(cfg, phase_activation)?;
        let mut nets = specs
            .iter()
            .map(|s| NetParams::init(s, rng))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || nets.next().expect("seven specs");
        Ok(FrameworkParams {
            cfg: *cfg,
            pp: next(),
            cp: next(),
            re_dp: next(),
            im_dp: next(),
            re_dc: next(),
            im_dc: next(),
            demod: next(),
        })
    }

    pub fn nets(&self) -> [&NetParams; 7] {
        [
            &self.pp,
            &self.cp,
            &self.re_dp,
            &self.im_dp,
            &self.re_dc,
            &self.im_dc,
            &self.demod,
        ]
    }

    pub fn nets_mut(&mut self) -> [&mut NetParams; 7] {
        [
            &mut self.pp,
            &mut self.cp,
            &mut self.re_dp,
            &mut self.im_dp,
            &mut self.re_dc,
            &mut self.im_dc,
            &mut self.demod,
        ]
    }

    pub fn phase_activation(&self) -> Activation {
        self.pp.spec().output_activation
    }

    pub fn n_trainable(&self) -> usize {
        self.nets().iter().map(|n| n.n_trainable()).sum()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.nets().into_iter().flat_map(|n| n.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.nets_mut().into_iter().flat_map(|n| n.tensors_mut()).collect()
    }

    pub fn touch(&mut self) {
        for n in self.nets_mut() {
            n.touch();
        }
    }

    /// Checks the network shapes against `cfg` (e.g. after loading a checkpoint).
    pub fn check_config(&self, cfg: &SystemConfig) -> Result<()> {
        let expected = network_specs(cfg, self.phase_activation())?;
        for ((name, net), spec) in NET_NAMES.iter().zip(self.nets()).zip(&expected) {
            if net.spec().layer_sizes != spec.layer_sizes {
                return Err(Error::Usage(format!(
                    "network '{name}' has layers {:?} but the configuration needs {:?}",
                    net.spec().layer_sizes,
                    spec.layer_sizes
                )));
            }
        }
        if self.cfg != *cfg {
            return Err(Error::Usage(format!(
                "parameters were built for {:?}, not {cfg:?}",
                self.cfg
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, config_digest: [u8; 32]) -> Checkpoint {
        Checkpoint {
            extension: self.cfg.to_words(),
            networks: NET_NAMES
                .iter()
                .zip(self.nets())
                .map(|(name, p)| NamedNet {
                    name: name.to_string(),
                    params: p.clone(),
                })
                .collect(),
            rng_id: RngStream::ALGORITHM.to_string(),
            config_digest,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = SystemConfig::from_words(&ck.extension)?;
        let get = |name: &str| ck.network(name).cloned();
        let fp = FrameworkParams {
            cfg,
            pp: get("pp")?,
            cp: get("cp")?,
            re_dp: get("re_dp")?,
            im_dp: get("im_dp")?,
            re_dc: get("re_dc")?,
            im_dc: get("im_dc")?,
            demod: get("demod")?,
        };
        fp.check_config(&cfg)
            .map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?;
        Ok(fp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants() {
        assert!(SystemConfig::paper().validate().is_ok());
        let mut c = SystemConfig::paper();
        c.n_s = 5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c = SystemConfig::paper();
        c.n_t_rf = 40;
        assert!(c.validate().is_err());
        c = SystemConfig::paper();
        c.anchor_subcarrier_q = 1;
        assert!(c.validate().is_err());
        c.k_subcarriers = 64;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn reference_architecture_widths() {
        let specs = network_specs(&SystemConfig::paper(), Activation::Relu).unwrap();
        assert_eq!(specs[0].layer_sizes, vec![1024, 512, 256, 128, 96]);
        assert_eq!(specs[1].layer_sizes, vec![1024, 512, 256, 128, 64, 48]);
        assert_eq!(specs[2].layer_sizes, vec![18, 20, 40, 20, 9]);
        assert_eq!(specs[4].layer_sizes, vec![18, 20, 40, 20, 9]);
        assert_eq!(specs[6].layer_sizes, vec![6, 20, 50, 20, 6]);
        assert_eq!(specs[6].output_activation, Activation::Sigmoid);
    }

    #[test]
    fn desk_architecture_widths() {
        let cfg = SystemConfig::narrowband(16, 8, 2, 2, 2);
        let specs = network_specs(&cfg, Activation::Relu).unwrap();
        assert_eq!(specs[0].layer_sizes, vec![256, 128, 64, 32, 32]);
        assert_eq!(specs[1].layer_sizes, vec![256, 128, 64, 32, 16, 16]);
        assert_eq!(specs[3].layer_sizes, vec![8, 16, 18, 16, 4]);
        assert_eq!(specs[6].layer_sizes, vec![4, 16, 33, 16, 4]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = SystemConfig::narrowband(8, 4, 2, 2, 2);
        let fp = FrameworkParams::init(&cfg, Activation::Relu, &mut RngStream::new(1, 2)).unwrap();
        let ck = fp.to_checkpoint([7; 32]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = FrameworkParams::from_checkpoint(&Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back, fp);
        let other = SystemConfig::narrowband(16, 4, 2, 2, 2);
        assert!(matches!(back.check_config(&other), Err(Error::Usage(_))));
    }
}
