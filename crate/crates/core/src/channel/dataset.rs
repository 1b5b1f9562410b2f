//! Little-endian binary channel dataset.
//!
//! Layout: 16-byte magic (`JHPFDAT1` zero-padded), `u32` version, `u32 N_T`, `u32 N_R`,
//! `u32 K`, `u64` sample count, `u32` RNG identifier length followed by its UTF-8 bytes,
//! then for each sample `K * N_R * N_T` entries (subcarrier-major, each matrix row-major)
//! as `(f64 re, f64 im)` pairs.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, C64};

pub const DATASET_MAGIC: [u8; 16] = *b"JHPFDAT1\0\0\0\0\0\0\0\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub n_t: u32,
    pub n_r: u32,
    pub k: u32,
    /// Free-form provenance: generator id, seeds and scenario.
    pub rng_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub header: DatasetHeader,
    /// `samples[i][k]` is the `N_R x N_T` channel of sample `i` on subcarrier `k`.
    pub samples: Vec<Vec<CMatrix>>,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        let (n_t, n_r, k) = (h.n_t as usize, h.n_r as usize, h.k as usize);
        w.write_all(&DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&h.n_t.to_le_bytes())?;
        w.write_all(&h.n_r.to_le_bytes())?;
        w.write_all(&h.k.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&(h.rng_id.len() as u32).to_le_bytes())?;
        w.write_all(h.rng_id.as_bytes())?;
        let mut buf = Vec::with_capacity(k * n_t * n_r * 16);
        for (i, sample) in self.samples.iter().enumerate() {
            if sample.len() != k || sample.iter().any(|m| m.shape() != (n_r, n_t)) {
                return Err(Error::input(format!(
                    "sample {i} does not match the {k} x {n_r}x{n_t} header"
                )));
            }
            buf.clear();
            for m in sample {
                for z in m.as_slice() {
                    buf.extend_from_slice(&z.re.to_le_bytes());
                    buf.extend_from_slice(&z.im.to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 16];
        r.read_exact(&mut magic)?;
        if magic != DATASET_MAGIC {
            return Err(Error::Format("not a channel dataset (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let n_t = read_u32(&mut r)?;
        let n_r = read_u32(&mut r)?;
        let k = read_u32(&mut r)?;
        let count = read_u64(&mut r)?;
        let id_len = read_u32(&mut r)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let rng_id = String::from_utf8(id)
            .map_err(|_| Error::Format("RNG identifier is not UTF-8".into()))?;

        let (nt, nr, kk) = (n_t as usize, n_r as usize, k as usize);
        let mut buf = vec![0u8; kk * nt * nr * 16];
        let mut samples = Vec::with_capacity(count as usize);
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let mut entries = buf.chunks_exact(16).map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            });
            let sample = (0..kk)
                .map(|_| CMatrix::from_vec(nr, nt, entries.by_ref().take(nr * nt).collect()))
                .collect::<Result<Vec<_>>>()?;
            samples.push(sample);
        }
        Ok(ChannelDataset {
            header: DatasetHeader { n_t, n_r, k, rng_id },
            samples,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
