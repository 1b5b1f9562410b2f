use ndarray::Array2;

use crate::error::{Error, Result};
use crate::phy::BitBlock;

pub const BCE_CLAMP: f64 = 1e-7;

/// Stacks bit blocks into a `batch x bits` 0/1 target matrix.
pub fn bits_to_targets(bits: &[BitBlock]) -> Result<Array2<f64>> {
    let width = bits.first().map_or(0, BitBlock::len);
    if bits.iter().any(|b| b.len() != width) {
        return Err(Error::input("bit blocks in a batch must have equal length"));
    }
    let flat = bits
        .iter()
        .flat_map(|b| b.as_slice().iter().map(|&v| v as f64))
        .collect();
    Ok(Array2::from_shape_vec((bits.len(), width), flat).expect("shape computed above"))
}

fn check(targets: &Array2<f64>, probs: &Array2<f64>) -> Result<()> {
    if targets.dim() != probs.dim() {
        return Err(Error::input(format!(
            "targets {:?} and probabilities {:?} differ in shape",
            targets.dim(),
            probs.dim()
        )));
    }
    if targets.nrows() == 0 {
        return Err(Error::input("empty batch"));
    }
    Ok(())
}

/// Binary cross-entropy summed over bits and averaged over the batch.
pub fn bce_loss(targets: &Array2<f64>, probs: &Array2<f64>) -> Result<f64> {
    check(targets, probs)?;
    let total: f64 = targets
        .iter()
        .zip(probs.iter())
        .map(|(&x, &p)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / targets.nrows() as f64)
}

/// Derivative of [`bce_loss`] with respect to the probabilities. Zero where the clamp is
/// active.
pub fn bce_grad(targets: &Array2<f64>, probs: &Array2<f64>) -> Result<Array2<f64>> {
    check(targets, probs)?;
    let m = targets.nrows() as f64;
    let mut g = Array2::zeros(probs.raw_dim());
    ndarray::Zip::from(&mut g)
        .and(targets)
        .and(probs)
        .for_each(|g, &x, &p| {
            *g = if p < BCE_CLAMP || p > 1.0 - BCE_CLAMP {
                0.0
            } else {
                (-x / p + (1.0 - x) / (1.0 - p)) / m
            };
        });
    Ok(g)
}
