use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::mlp::{Activation, MlpSpec, NetParams, BN_EPS, BN_MOMENTUM};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"JHPFCKP1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedNet {
    pub name: String,
    pub params: NetParams,
}

/// A set of networks plus the metadata needed to rebuild them.
///
/// Layout (little-endian): magic, version, extension words (`u32` count then values),
/// BN epsilon and momentum as `f64`, network count, per network its name and [`MlpSpec`],
/// the RNG identifier, a 32-byte configuration digest, then every tensor of every network
/// as `f64` in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Caller-defined words, e.g. the system dimensions.
    pub extension: Vec<u32>,
    pub networks: Vec<NamedNet>,
    pub rng_id: String,
    pub config_digest: [u8; 32],
}

pub fn config_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    Ok(w.write_all(s.as_bytes())?)
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > 4096 {
        return Err(Error::Format(format!("implausible string length {n}")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    String::from_utf8(b).map_err(|_| Error::Format("string is not UTF-8".into()))
}

fn activation(code: u8) -> Result<Activation> {
    Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation {code}")))
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&NetParams> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .map(|n| &n.params)
            .ok_or_else(|| Error::Format(format!("checkpoint has no network '{name}'")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        put_u32(w, self.extension.len() as u32)?;
        for &v in &self.extension {
            put_u32(w, v)?;
        }
        w.write_all(&BN_EPS.to_le_bytes())?;
        w.write_all(&BN_MOMENTUM.to_le_bytes())?;
        put_u32(w, self.networks.len() as u32)?;
        for net in &self.networks {
            let spec = net.params.spec();
            put_str(w, &net.name)?;
            put_u32(w, spec.layer_sizes.len() as u32)?;
            for &s in &spec.layer_sizes {
                put_u32(w, s as u32)?;
            }
            w.write_all(&[
                spec.hidden_activation.code(),
                spec.output_activation.code(),
                spec.batch_norm_after_hidden as u8,
            ])?;
        }
        put_str(w, &self.rng_id)?;
        w.write_all(&self.config_digest)?;
        for net in &self.networks {
            for t in net.params.all_tensors() {
                for v in t {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &get::<8>(r)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = get_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let n_ext = get_u32(r)? as usize;
        if n_ext > 1024 {
            return Err(Error::Format(format!("implausible extension length {n_ext}")));
        }
        let extension = (0..n_ext).map(|_| get_u32(r)).collect::<Result<_>>()?;
        let (eps, momentum) = (get_f64(r)?, get_f64(r)?);
        if eps != BN_EPS || momentum != BN_MOMENTUM {
            return Err(Error::Format(format!(
                "checkpoint uses BN epsilon {eps} and momentum {momentum}; this build uses {BN_EPS} and {BN_MOMENTUM}"
            )));
        }
        let n_nets = get_u32(r)? as usize;
        let mut specs = Vec::with_capacity(n_nets.min(64));
        for _ in 0..n_nets {
            let name = get_str(r)?;
            let n_sizes = get_u32(r)? as usize;
            if n_sizes > 256 {
                return Err(Error::Format(format!("implausible layer count {n_sizes}")));
            }
            let layer_sizes = (0..n_sizes)
                .map(|_| get_u32(r).map(|v| v as usize))
                .collect::<Result<_>>()?;
            let [h, o, bn] = get::<3>(r)?;
            let spec = MlpSpec {
                layer_sizes,
                hidden_activation: activation(h)?,
                output_activation: activation(o)?,
                batch_norm_after_hidden: bn != 0,
            };
            spec.validate()
                .map_err(|e| Error::Format(format!("network '{name}': {e}")))?;
            specs.push((name, spec));
        }
        let rng_id = get_str(r)?;
        let config_digest = get::<32>(r)?;
        let mut networks = Vec::with_capacity(specs.len());
        for (name, spec) in specs {
            let mut params = NetParams::zeros(&spec)?;
            for t in params.all_tensors_mut() {
                for v in t.iter_mut() {
                    *v = get_f64(r)?;
                }
            }
            if params
                .bn
                .iter()
                .flatten()
                .any(|bn| bn.running_var.iter().any(|&v| !(v >= 0.0)))
            {
                return Err(Error::Format(format!("network '{name}' has negative running variance")));
            }
            networks.push(NamedNet { name, params });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            extension,
            networks,
            rng_id,
            config_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| {
            Error::Input(format!("cannot open checkpoint {}: {e}", path.display()))
        })?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}
