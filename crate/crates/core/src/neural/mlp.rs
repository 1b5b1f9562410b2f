use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    /// `pi * tanh(x)`, a bounded alternative for phase outputs.
    TanhPi,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Linear => 2,
            Activation::TanhPi => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            2 => Activation::Linear,
            3 => Activation::TanhPi,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => x,
            Activation::TanhPi => std::f64::consts::PI * x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
            Activation::TanhPi => {
                let t = y / std::f64::consts::PI;
                std::f64::consts::PI * (1.0 - t * t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub batch_norm_after_hidden: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Self {
        MlpSpec {
            layer_sizes,
            hidden_activation: Activation::Relu,
            output_activation,
            batch_norm_after_hidden: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "an MLP needs at least two positive layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_affine(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Multiply-accumulates of the affine layers for one input vector.
    pub fn macs(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in BN; running statistics are reported on the tape.
    Train,
    /// Running statistics in BN; samples are processed independently.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetParams {
    spec: MlpSpec,
    pub dense: Vec<Dense>,
    /// One entry per affine layer; `None` where no BN follows (always the output layer).
    pub bn: Vec<Option<BatchNorm>>,
    version: u64,
}

/// Compares values only; the modification counter is ignored.
impl PartialEq for NetParams {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.dense == other.dense && self.bn == other.bn
    }
}

struct BnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

struct LayerRecord {
    input: Array2<f64>,
    bn: Option<BnCache>,
    pre_act: Array2<f64>,
    output: Array2<f64>,
}

/// Intermediates of one forward pass.
pub struct MlpTape {
    version: u64,
    layer_sizes: Vec<usize>,
    mode: Mode,
    records: Vec<LayerRecord>,
}

impl MlpTape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.records[0].input.nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.records.last().unwrap().output
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.records[0].input
    }
}

/// Gradients with the same layout as the trainable part of [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub dense: Vec<(Array2<f64>, Array1<f64>)>,
    pub bn: Vec<Option<(Array1<f64>, Array1<f64>)>>,
}

impl NetGrads {
    /// Weight, bias, then (if present) BN scale and shift, layer by layer.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for ((w, b), bn) in self.dense.iter().zip(&self.bn) {
            out.push(w.as_slice().unwrap());
            out.push(b.as_slice().unwrap());
            if let Some((g, s)) = bn {
                out.push(g.as_slice().unwrap());
                out.push(s.as_slice().unwrap());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn uniform_matrix(rows: usize, cols: usize, limit: f64, rng: &mut RngStream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| (2.0 * rng.uniform() - 1.0) * limit)
}

impl NetParams {
    /// He-uniform init for layers feeding a ReLU, Glorot-uniform otherwise; zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_affine();
        let mut dense = Vec::with_capacity(n);
        let mut bn = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            let last = l + 1 == n;
            let act = if last {
                spec.output_activation
            } else {
                spec.hidden_activation
            };
            let limit = if act == Activation::Relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            dense.push(Dense {
                weight: uniform_matrix(fan_out, fan_in, limit, rng),
                bias: Array1::zeros(fan_out),
            });
            bn.push((!last && spec.batch_norm_after_hidden).then(|| BatchNorm::new(fan_out)));
        }
        Ok(NetParams {
            spec: spec.clone(),
            dense,
            bn,
            version: 0,
        })
    }

    /// Zero-filled parameters (BN at identity, running variance one).
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_affine();
        let dense = (0..n)
            .map(|l| Dense {
                weight: Array2::zeros((spec.layer_sizes[l + 1], spec.layer_sizes[l])),
                bias: Array1::zeros(spec.layer_sizes[l + 1]),
            })
            .collect();
        let bn = (0..n)
            .map(|l| {
                (l + 1 < n && spec.batch_norm_after_hidden)
                    .then(|| BatchNorm::new(spec.layer_sizes[l + 1]))
            })
            .collect();
        Ok(NetParams {
            spec: spec.clone(),
            dense,
            bn,
            version: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Incremented whenever trainable values change through [`NetParams::touch`].
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Marks the parameters as modified, invalidating outstanding tapes.
    pub fn touch(&mut self) {
        self.version += 1;
    }

    /// Trainable tensors in [`NetGrads::tensors`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (d, bn) in self.dense.iter_mut().zip(self.bn.iter_mut()) {
            out.push(d.weight.as_slice_mut().unwrap());
            out.push(d.bias.as_slice_mut().unwrap());
            if let Some(bn) = bn {
                out.push(bn.gamma.as_slice_mut().unwrap());
                out.push(bn.beta.as_slice_mut().unwrap());
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (d, bn) in self.dense.iter().zip(&self.bn) {
            out.push(d.weight.as_slice().unwrap());
            out.push(d.bias.as_slice().unwrap());
            if let Some(bn) = bn {
                out.push(bn.gamma.as_slice().unwrap());
                out.push(bn.beta.as_slice().unwrap());
            }
        }
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All stored tensors in checkpoint order: per layer weight, bias, then BN scale, shift,
    /// running mean and running variance.
    pub fn all_tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (d, bn) in self.dense.iter().zip(&self.bn) {
            out.push(d.weight.as_slice().unwrap());
            out.push(d.bias.as_slice().unwrap());
            if let Some(bn) = bn {
                out.push(bn.gamma.as_slice().unwrap());
                out.push(bn.beta.as_slice().unwrap());
                out.push(bn.running_mean.as_slice().unwrap());
                out.push(bn.running_var.as_slice().unwrap());
            }
        }
        out
    }

    pub fn all_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (d, bn) in self.dense.iter_mut().zip(self.bn.iter_mut()) {
            out.push(d.weight.as_slice_mut().unwrap());
            out.push(d.bias.as_slice_mut().unwrap());
            if let Some(bn) = bn {
                out.push(bn.gamma.as_slice_mut().unwrap());
                out.push(bn.beta.as_slice_mut().unwrap());
                out.push(bn.running_mean.as_slice_mut().unwrap());
                out.push(bn.running_var.as_slice_mut().unwrap());
            }
        }
        out
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            dense: self
                .dense
                .iter()
                .map(|d| (Array2::zeros(d.weight.raw_dim()), Array1::zeros(d.bias.len())))
                .collect(),
            bn: self
                .bn
                .iter()
                .map(|b| {
                    b.as_ref()
                        .map(|b| (Array1::zeros(b.gamma.len()), Array1::zeros(b.beta.len())))
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: ArrayView2<f64>, mode: Mode) -> Result<MlpTape> {
        if input.ncols() != self.spec.input_size() {
            return Err(Error::input(format!(
                "network expects {} inputs, got {}",
                self.spec.input_size(),
                input.ncols()
            )));
        }
        if input.nrows() == 0 {
            return Err(Error::input("empty batch"));
        }
        if mode == Mode::Train && input.nrows() < 2 && self.bn.iter().any(Option::is_some) {
            return Err(Error::input("batch-norm training needs at least two samples"));
        }
        let n = self.dense.len();
        let mut records = Vec::with_capacity(n);
        let mut x = input.to_owned();
        for l in 0..n {
            let d = &self.dense[l];
            let mut a = x.dot(&d.weight.t());
            a += &d.bias;
            let bn_cache = self.bn[l].as_ref().map(|bn| batch_norm_forward(&mut a, bn, mode));
            let act = if l + 1 == n {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            let out = a.mapv(|v| act.apply(v));
            records.push(LayerRecord {
                input: x,
                bn: bn_cache,
                pre_act: a,
                output: out.clone(),
            });
            x = out;
        }
        Ok(MlpTape {
            version: self.version,
            layer_sizes: self.spec.layer_sizes.clone(),
            mode,
            records,
        })
    }

    /// Reverse sweep of `tape` for output adjoint `grad_out`; returns parameter and input
    /// gradients.
    pub fn backward(&self, tape: &MlpTape, grad_out: ArrayView2<f64>) -> Result<(NetGrads, Array2<f64>)> {
        if tape.version != self.version || tape.layer_sizes != self.spec.layer_sizes {
            return Err(Error::Usage(
                "tape was recorded with different or since-modified parameters".into(),
            ));
        }
        if grad_out.dim() != tape.output().dim() {
            return Err(Error::input(format!(
                "output gradient shape {:?} does not match network output {:?}",
                grad_out.dim(),
                tape.output().dim()
            )));
        }
        let n = self.dense.len();
        let mut grads = self.zero_grads();
        let mut g = grad_out.to_owned();
        for l in (0..n).rev() {
            let rec = &tape.records[l];
            let act = if l + 1 == n {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            Zip::from(&mut g)
                .and(&rec.pre_act)
                .and(&rec.output)
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));
            if let (Some(bn), Some(cache)) = (&self.bn[l], &rec.bn) {
                let (dgamma, dbeta, dx) = batch_norm_backward(&g, bn, cache, tape.mode);
                grads.bn[l] = Some((dgamma, dbeta));
                g = dx;
            }
            grads.dense[l].0 = g.t().dot(&rec.input);
            grads.dense[l].1 = g.sum_axis(Axis(0));
            g = g.dot(&self.dense[l].weight);
        }
        Ok((grads, g))
    }

    /// Folds a train-mode tape's batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, tape: &MlpTape) {
        if tape.mode != Mode::Train {
            return;
        }
        let m = tape.batch_size() as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (bn, rec) in self.bn.iter_mut().zip(&tape.records) {
            if let (Some(bn), Some(cache)) = (bn, &rec.bn) {
                bn.running_mean.zip_mut_with(&cache.batch_mean, |r, &b| {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b
                });
                bn.running_var.zip_mut_with(&cache.batch_var, |r, &b| {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b * unbias
                });
            }
        }
    }

    /// Convenience: forward in inference mode and return the output.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut tape = self.forward(input, Mode::Infer)?;
        Ok(tape.records.pop().unwrap().output)
    }
}

fn batch_norm_forward(a: &mut Array2<f64>, bn: &BatchNorm, mode: Mode) -> BnCache {
    let (mean, var) = match mode {
        Mode::Train => {
            let m = a.nrows() as f64;
            let mean = a.sum_axis(Axis(0)) / m;
            let centred = &*a - &mean;
            let var = centred.mapv(|v| v * v).sum_axis(Axis(0)) / m;
            (mean, var)
        }
        Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let mut x_hat = &*a - &mean;
    x_hat *= &inv_std;
    let y = &x_hat * &bn.gamma + &bn.beta;
    *a = y;
    BnCache {
        x_hat,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    }
}

fn batch_norm_backward(
    g: &Array2<f64>,
    bn: &BatchNorm,
    cache: &BnCache,
    mode: Mode,
) -> (Array1<f64>, Array1<f64>, Array2<f64>) {
    let dgamma = (g * &cache.x_hat).sum_axis(Axis(0));
    let dbeta = g.sum_axis(Axis(0));
    let dx_hat = g * &bn.gamma;
    let dx = match mode {
        Mode::Infer => dx_hat * &cache.inv_std,
        Mode::Train => {
            let m = g.nrows() as f64;
            let sum_dxh = dx_hat.sum_axis(Axis(0));
            let sum_dxh_xh = (&dx_hat * &cache.x_hat).sum_axis(Axis(0));
            let mut dx = dx_hat * m - &sum_dxh - &(&cache.x_hat * &sum_dxh_xh);
            dx *= &(&cache.inv_std / m);
            dx
        }
    };
    (dgamma, dbeta, dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = RngStream::new(seed, 0);
        Array2::from_shape_fn((rows, cols), |_| r.standard_normal())
    }

    /// Scalar objective `sum(c .* out)` so the output adjoint is `c`.
    fn objective(p: &NetParams, x: &Array2<f64>, c: &Array2<f64>, mode: Mode) -> f64 {
        let t = p.forward(x.view(), mode).unwrap();
        (t.output() * c).sum()
    }

    /// Relative error with a 1e-5 floor: central differences at h = 1e-6 carry about 1e-10
    /// absolute rounding noise, which would otherwise dominate near-zero entries.
    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
    }

    fn check_gradients(spec: &MlpSpec, mode: Mode, seed: u64) {
        let mut rng = RngStream::new(seed, 1);
        let mut p = NetParams::init(spec, &mut rng).unwrap();
        // non-trivial BN parameters and running stats
        for bn in p.bn.iter_mut().flatten() {
            bn.gamma.mapv_inplace(|_| 0.5 + rng.uniform());
            bn.beta.mapv_inplace(|_| rng.uniform() - 0.5);
            bn.running_mean.mapv_inplace(|_| 0.3 * rng.standard_normal());
            bn.running_var.mapv_inplace(|_| 0.5 + rng.uniform());
        }
        let x = random_input(5, spec.input_size(), seed + 10);
        let c = random_input(5, spec.output_size(), seed + 20);
        let tape = p.forward(x.view(), mode).unwrap();
        let (grads, gx) = p.backward(&tape, c.view()).unwrap();

        let h = 1e-6;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        let mut worst = 0.0f64;
        for (ti, tensor) in analytic.iter().enumerate() {
            for (i, &ga) in tensor.iter().enumerate() {
                let orig = p.tensors_mut()[ti][i];
                p.tensors_mut()[ti][i] = orig + h;
                let fp = objective(&p, &x, &c, mode);
                p.tensors_mut()[ti][i] = orig - h;
                let fm = objective(&p, &x, &c, mode);
                p.tensors_mut()[ti][i] = orig;
                worst = worst.max(rel_err(ga, (fp - fm) / (2.0 * h)));
            }
        }
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let (r, col) = (idx / x.ncols(), idx % x.ncols());
            let orig = xp[[r, col]];
            xp[[r, col]] = orig + h;
            let fp = objective(&p, &xp, &c, mode);
            xp[[r, col]] = orig - h;
            let fm = objective(&p, &xp, &c, mode);
            xp[[r, col]] = orig;
            worst = worst.max(rel_err(gx[[r, col]], (fp - fm) / (2.0 * h)));
        }
        assert!(worst < 1e-4, "{spec:?} {mode:?}: worst relative error {worst}");
    }

    #[test]
    fn gradient_check_all_layer_types() {
        for (i, out) in [
            Activation::Relu,
            Activation::Sigmoid,
            Activation::Linear,
            Activation::TanhPi,
        ]
        .into_iter()
        .enumerate()
        {
            let spec = MlpSpec::new(vec![6, 10, 4], out);
            check_gradients(&spec, Mode::Train, 100 + i as u64);
            check_gradients(&spec, Mode::Infer, 200 + i as u64);
            let no_bn = MlpSpec {
                batch_norm_after_hidden: false,
                ..spec
            };
            check_gradients(&no_bn, Mode::Train, 300 + i as u64);
        }
        check_gradients(&MlpSpec::new(vec![3, 8, 7, 5, 2], Activation::Sigmoid), Mode::Train, 9);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(vec![4, 6, 3], Activation::Linear);
        let p = NetParams::zeros(&spec).unwrap();
        let out = p.predict(random_input(3, 4, 1).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Linear);
        let mut p = NetParams::zeros(&spec).unwrap();
        p.dense[0].weight = Array2::eye(3);
        let x = random_input(4, 3, 2);
        assert_eq!(p.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn linear_layer_weight_gradient_closed_form() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Linear);
        let p = NetParams::init(&spec, &mut RngStream::new(1, 1)).unwrap();
        let x = array![[1.0, -2.0, 0.5]];
        let g = array![[0.3, -1.5]];
        let tape = p.forward(x.view(), Mode::Infer).unwrap();
        let (grads, _) = p.backward(&tape, g.view()).unwrap();
        assert_eq!(grads.dense[0].0, g.t().dot(&x));
        assert_eq!(grads.dense[0].1, array![0.3, -1.5]);
    }

    #[test]
    fn zero_output_gradient_gives_zero() {
        let spec = MlpSpec::new(vec![6, 10, 4], Activation::Sigmoid);
        let p = NetParams::init(&spec, &mut RngStream::new(2, 2)).unwrap();
        let x = random_input(4, 6, 3);
        let tape = p.forward(x.view(), Mode::Train).unwrap();
        let (grads, gx) = p.backward(&tape, Array2::zeros((4, 4)).view()).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_inference() {
        let spec = MlpSpec::new(vec![8, 16, 4], Activation::Sigmoid);
        let p = NetParams::init(&spec, &mut RngStream::new(3, 3)).unwrap();
        let x = random_input(1, 8, 4);
        assert_eq!(p.predict(x.view()).unwrap(), p.predict(x.view()).unwrap());
    }

    #[test]
    fn infer_mode_ignores_batch_composition() {
        let spec = MlpSpec::new(vec![5, 7, 3], Activation::Linear);
        let mut p = NetParams::init(&spec, &mut RngStream::new(4, 4)).unwrap();
        let warm = random_input(16, 5, 8);
        let t = p.forward(warm.view(), Mode::Train).unwrap();
        p.update_running_stats(&t);
        let x = random_input(6, 5, 5);
        let full = p.predict(x.view()).unwrap();
        let single = p.predict(x.slice(ndarray::s![2..3, ..])).unwrap();
        assert_eq!(full.row(2), single.row(0));
    }

    #[test]
    fn train_mode_normalises_batch() {
        let spec = MlpSpec::new(vec![5, 7, 3], Activation::Linear);
        let p = NetParams::init(&spec, &mut RngStream::new(5, 5)).unwrap();
        let x = random_input(32, 5, 6);
        let t = p.forward(x.view(), Mode::Train).unwrap();
        let xh = &t.records[0].bn.as_ref().unwrap().x_hat;
        for col in xh.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-6);
            assert!(var < 1.0);
        }
        // undo the epsilon: the normalised features have unit variance exactly
        let cache = t.records[0].bn.as_ref().unwrap();
        for (j, col) in xh.columns().into_iter().enumerate() {
            let v = cache.batch_var[j];
            let var = col.mapv(|x| x * x).mean().unwrap() * (v + BN_EPS) / v;
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn stale_tape_rejected() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Linear);
        let mut p = NetParams::init(&spec, &mut RngStream::new(6, 6)).unwrap();
        let x = random_input(3, 2, 1);
        let t = p.forward(x.view(), Mode::Train).unwrap();
        p.touch();
        assert!(matches!(
            p.backward(&t, Array2::zeros((3, 1)).view()),
            Err(Error::Usage(_))
        ));
        assert!(p.forward(random_input(3, 5, 1).view(), Mode::Infer).is_err());
    }
}
