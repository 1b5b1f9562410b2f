use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates for a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(shapes: &[&[f64]]) -> Self {
        Adam {
            m: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || params
                .iter()
                .zip(grads)
                .zip(&self.m)
                .any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(Error::Usage("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = vec![1.0, -2.0, 3.0];
        let mut opt = Adam::new(&[&w]);
        opt.step(&mut [&mut w], &[&[0.0; 3]], 0.1).unwrap();
        assert_eq!(w, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut w = vec![0.0];
            let mut opt = Adam::new(&[&w]);
            opt.step(&mut [&mut w], &[&[g]], 0.01).unwrap();
            assert!((w[0].abs() - 0.01).abs() < 1e-7, "g={g}: {}", w[0]);
            assert_eq!(w[0].signum(), -g.signum());
        }
    }

    #[test]
    fn descends_quadratic() {
        let mut w = vec![1.0];
        let mut opt = Adam::new(&[&w]);
        for _ in 0..100 {
            let g = [2.0 * w[0]];
            opt.step(&mut [&mut w], &[&g], 0.05).unwrap();
        }
        assert!(w[0].abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn mismatched_state_is_usage_error() {
        let mut w = vec![0.0; 2];
        let mut opt = Adam::new(&[&[0.0; 3]]);
        assert!(opt.step(&mut [&mut w], &[&[0.0; 2]], 0.1).is_err());
    }
}
