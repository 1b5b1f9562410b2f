use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scheme,scenario,csi,snr_db,bit_errors,bits_total,ber,censored";

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_total: u64,
    /// Fewer errors than the stopping target: the BER is an upper-bound estimate.
    pub censored: bool,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits_total as f64
    }

    /// Binomial standard deviation of the estimate.
    pub fn sigma(&self) -> f64 {
        let p = self.ber();
        (p * (1.0 - p) / self.bits_total as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub scheme: String,
    pub scenario: String,
    pub csi_condition: String,
    pub points: Vec<BerPoint>,
}

impl BerCurve {
    pub fn validate(&self) -> Result<()> {
        for p in &self.points {
            if p.bits_total == 0 || p.bit_errors > p.bits_total {
                return Err(Error::input(format!(
                    "invalid BER point at {} dB: {} errors in {} bits",
                    p.snr_db, p.bit_errors, p.bits_total
                )));
            }
        }
        Ok(())
    }

    pub fn point_at(&self, snr_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.snr_db == snr_db)
    }

    /// Trapezoidal area under BER(SNR) and its binomial standard deviation (points treated
    /// as independent).
    pub fn area(&self) -> (f64, f64) {
        let n = self.points.len();
        if n < 2 {
            return self.points.first().map_or((0.0, 0.0), |p| (p.ber(), p.sigma()));
        }
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let dx = self.points[i + 1].snr_db - self.points[i].snr_db;
            w[i] += dx / 2.0;
            w[i + 1] += dx / 2.0;
        }
        let area = self.points.iter().zip(&w).map(|(p, w)| w * p.ber()).sum();
        let var: f64 = self.points.iter().zip(&w).map(|(p, w)| (w * p.sigma()).powi(2)).sum();
        (area, var.sqrt())
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.scheme, self.scenario, self.csi_condition)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.scheme,
                self.scenario,
                self.csi_condition,
                p.snr_db,
                p.bit_errors,
                p.bits_total,
                p.ber(),
                p.censored as u8
            ));
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output. Lines starting with `#` are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Format("BER CSV header missing or wrong".into()));
        }
        let mut curve: Option<BerCurve> = None;
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = |what: &str| Error::Format(format!("BER CSV line {}: {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad("expected 8 fields"));
            }
            let point = BerPoint {
                snr_db: f[3].parse().map_err(|_| bad("snr_db"))?,
                bit_errors: f[4].parse().map_err(|_| bad("bit_errors"))?,
                bits_total: f[5].parse().map_err(|_| bad("bits_total"))?,
                censored: match f[7] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("censored must be 0 or 1")),
                },
            };
            let c = curve.get_or_insert_with(|| BerCurve {
                scheme: f[0].into(),
                scenario: f[1].into(),
                csi_condition: f[2].into(),
                points: Vec::new(),
            });
            if (c.scheme.as_str(), c.scenario.as_str(), c.csi_condition.as_str()) != (f[0], f[1], f[2]) {
                return Err(bad("one file holds one curve"));
            }
            c.points.push(point);
        }
        let c = curve.ok_or_else(|| Error::Format("BER CSV has no data rows".into()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}
