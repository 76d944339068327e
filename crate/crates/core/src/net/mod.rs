//! Dense feed-forward network `g(x)` with a scalar output.
//!
//! Hidden layers are `linear -> [batch norm] -> ReLU -> [dropout]`; the last
//! layer is linear with a single output unit. Gradients are derived by hand,
//! including the batch-statistics pathway of batch normalization.

mod adam;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg::{matmul_a_b, matmul_a_bt, matmul_at_b, Matrix};
use crate::rng;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Weight of the newest batch in the running batch-norm statistics.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Rows per chunk when scoring large inputs in eval mode.
const EVAL_CHUNK: usize = 256;

const INIT_STREAM: u64 = 1;

/// Architecture of the network.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    /// Input dimension first, then hidden widths, then exactly `1`.
    pub layer_dims: Vec<usize>,
    /// One flag per hidden layer.
    pub use_batchnorm: Vec<bool>,
    /// One rate in `[0, 1)` per hidden layer.
    pub dropout: Vec<f64>,
    pub seed: u64,
}

impl MlpSpec {
    /// Plain ReLU network: no batch norm, no dropout.
    pub fn new(layer_dims: Vec<usize>, seed: u64) -> Self {
        let hidden = layer_dims.len().saturating_sub(2);
        MlpSpec { layer_dims, use_batchnorm: vec![false; hidden], dropout: vec![0.0; hidden], seed }
    }

    pub fn with_batchnorm(mut self, enabled: bool) -> Self {
        self.use_batchnorm.iter_mut().for_each(|b| *b = enabled);
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout.iter_mut().for_each(|r| *r = rate);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims.first().copied().unwrap_or(0)
    }

    pub fn hidden_layers(&self) -> usize {
        self.layer_dims.len().saturating_sub(2)
    }

    pub fn any_batchnorm(&self) -> bool {
        self.use_batchnorm.iter().any(|&b| b)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.layer_dims;
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "network needs at least an input and an output dimension, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer dimensions must be positive, got {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::Config(format!("output dimension must be 1, got {dims:?}")));
        }
        let hidden = self.hidden_layers();
        if self.use_batchnorm.len() != hidden || self.dropout.len() != hidden {
            return Err(Error::Config(format!(
                "expected {hidden} batch-norm flags and dropout rates, got {} and {}",
                self.use_batchnorm.len(),
                self.dropout.len()
            )));
        }
        if let Some(r) = self.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {r}")));
        }
        Ok(())
    }
}

/// Fully connected layer; `weights` is `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Batch-norm affine parameters and running statistics for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            scale: vec![1.0; width],
            shift: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Input to the linear map, `batch x in_dim`.
    input: Matrix,
    batch_stats: Option<BatchStats>,
    /// Normalized pre-activations (batch norm only).
    normalized: Option<Vec<f64>>,
    /// Values fed into the ReLU (hidden layers only).
    pre_relu: Vec<f64>,
    /// Dropout multipliers: 0 or `1 / (1 - rate)`.
    dropout: Option<Vec<f64>>,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    generation: u64,
    batch: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Inputs to the ReLU of every hidden layer, `batch x width` row-major.
    pub fn pre_activations(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layers.iter().filter(|l| !l.pre_relu.is_empty()).map(|l| l.pre_relu.as_slice())
    }

    /// Dropout multipliers per hidden layer, `None` where dropout is off or in eval mode.
    pub fn dropout_masks(&self) -> impl Iterator<Item = Option<&[f64]>> + '_ {
        self.layers.iter().filter(|l| !l.pre_relu.is_empty()).map(|l| l.dropout.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Gradients shaped like the trainable parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<DenseGrad>,
    pub norms: Vec<Option<NormGrad>>,
}

impl Gradients {
    /// Flat views in the order of [`Mlp::trainable_tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (l, d) in self.dense.iter().enumerate() {
            out.push(d.weights.as_slice());
            out.push(d.bias.as_slice());
            if let Some(Some(n)) = self.norms.get(l) {
                out.push(n.scale.as_slice());
                out.push(n.shift.as_slice());
            }
        }
        out
    }
}

/// Network parameters `theta`: weights, biases, batch-norm affine parameters
/// and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    dense: Vec<Dense>,
    norms: Vec<Option<BatchNorm>>,
    generation: u64,
}

impl Mlp {
    /// Weights uniform in `+-1/sqrt(fan_in)` from `spec.seed`; biases 0; batch
    /// norm starts as the identity with running statistics (0, 1).
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(spec.seed, INIT_STREAM, 0);
        let dims = &spec.layer_dims;
        let mut dense = Vec::with_capacity(dims.len() - 1);
        let mut norms = Vec::with_capacity(dims.len() - 1);
        for (l, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound);
            let weights = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
            dense.push(Dense { in_dim: fan_in, out_dim: fan_out, weights, bias: vec![0.0; fan_out] });
            let bn = spec.use_batchnorm.get(l).copied().unwrap_or(false);
            norms.push(bn.then(|| BatchNorm::new(fan_out)));
        }
        Ok(Mlp { spec: spec.clone(), dense, norms, generation: 0 })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.dense
    }

    /// Mutable access to the linear layers. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.dense
    }

    pub fn batchnorms(&self) -> &[Option<BatchNorm>] {
        &self.norms
    }

    /// Mutable access to batch-norm parameters. Invalidates outstanding caches.
    pub fn batchnorms_mut(&mut self) -> &mut [Option<BatchNorm>] {
        self.generation += 1;
        &mut self.norms
    }

    /// Trainable tensors: per layer weights, bias, then batch-norm scale and shift.
    pub fn trainable_tensors(&self) -> Vec<&[f64]> {
        self.collect_tensors(false)
    }

    /// Every tensor including running statistics, in checkpoint order: per
    /// layer weights, bias, then scale, shift, running mean, running variance.
    pub fn state_tensors(&self) -> Vec<&[f64]> {
        self.collect_tensors(true)
    }

    fn collect_tensors(&self, with_buffers: bool) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (d, n) in self.dense.iter().zip(&self.norms) {
            out.push(d.weights.as_slice());
            out.push(d.bias.as_slice());
            if let Some(n) = n {
                out.push(n.scale.as_slice());
                out.push(n.shift.as_slice());
                if with_buffers {
                    out.push(n.running_mean.as_slice());
                    out.push(n.running_var.as_slice());
                }
            }
        }
        out
    }

    /// Mutable trainable tensors in [`Mlp::trainable_tensors`] order. Invalidates outstanding caches.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (d, n) in self.dense.iter_mut().zip(self.norms.iter_mut()) {
            out.push(d.weights.as_mut_slice());
            out.push(d.bias.as_mut_slice());
            if let Some(n) = n {
                out.push(n.scale.as_mut_slice());
                out.push(n.shift.as_mut_slice());
            }
        }
        out
    }

    /// Rebuilds a network from [`Mlp::state_tensors`] output.
    pub fn from_state(spec: &MlpSpec, tensors: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Mlp::init(spec)?;
        let expected: Vec<usize> = net.state_tensors().iter().map(|t| t.len()).collect();
        if tensors.len() != expected.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", expected.len(), tensors.len())));
        }
        for (i, (t, &n)) in tensors.iter().zip(&expected).enumerate() {
            if t.len() != n {
                return Err(Error::Shape(format!("tensor {i} has {} values, expected {n}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("tensor {i} contains non-finite values")));
            }
        }
        let mut it = tensors.into_iter();
        for (d, n) in net.dense.iter_mut().zip(net.norms.iter_mut()) {
            d.weights = it.next().unwrap();
            d.bias = it.next().unwrap();
            if let Some(n) = n {
                n.scale = it.next().unwrap();
                n.shift = it.next().unwrap();
                n.running_mean = it.next().unwrap();
                n.running_var = it.next().unwrap();
                if n.running_var.iter().any(|&v| v < 0.0) {
                    return Err(Error::InvalidArgument("negative running variance".into()));
                }
            }
        }
        Ok(net)
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        let d = self.spec.input_dim();
        if inputs.cols() != d && inputs.rows() > 0 {
            return Err(Error::Shape(format!("network expects {d} input features, got {}", inputs.cols())));
        }
        Ok(())
    }

    /// Scores a batch. Train mode uses batch statistics, updates the running
    /// statistics and draws dropout masks from `rng`; eval mode uses running
    /// statistics and never drops units.
    pub fn forward<R: RngCore>(
        &mut self,
        inputs: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(inputs)?;
        match mode {
            Mode::Train => self.forward_train(inputs, rng),
            Mode::Eval => Ok(self.forward_impl(inputs, None)),
        }
    }

    /// Eval-mode scores without keeping a cache.
    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        self.check_input(inputs)?;
        // Per-unit affine map applied after the matrix product: bias plus folded batch norm.
        let affine: Vec<(Vec<f64>, Vec<f64>)> = self
            .dense
            .iter()
            .zip(self.norms.iter().chain(core::iter::repeat(&None)))
            .map(|(dense, norm)| match norm {
                Some(norm) => (0..dense.out_dim)
                    .map(|j| {
                        let a = norm.scale[j] / libm::sqrt(norm.running_var[j] + BN_EPS);
                        (a, a * (dense.bias[j] - norm.running_mean[j]) + norm.shift[j])
                    })
                    .unzip(),
                None => (vec![1.0; dense.out_dim], dense.bias.clone()),
            })
            .collect();
        let widest = self.dense.iter().map(|d| d.out_dim).max().unwrap_or(1);
        let mut buffers = [vec![0.0; EVAL_CHUNK * widest], vec![0.0; EVAL_CHUNK * widest]];
        let last = self.dense.len() - 1;
        let mut out = Vec::with_capacity(inputs.rows());
        let mut start = 0;
        while start < inputs.rows() {
            let end = (start + EVAL_CHUNK).min(inputs.rows());
            let rows = end - start;
            let mut src = &inputs.as_slice()[start * inputs.cols()..end * inputs.cols()];
            let [front, back] = &mut buffers;
            let (mut cur, mut other) = (front, back);
            for (l, (dense, (scale, offset))) in self.dense.iter().zip(&affine).enumerate() {
                let z = &mut cur[..rows * dense.out_dim];
                matmul_a_bt(src, &dense.weights, rows, dense.in_dim, dense.out_dim, z);
                for row in z.chunks_exact_mut(dense.out_dim) {
                    for ((v, a), b) in row.iter_mut().zip(scale).zip(offset) {
                        let y = a * *v + b;
                        *v = if l == last { y } else { y.max(0.0) };
                    }
                }
                core::mem::swap(&mut cur, &mut other);
                src = &other[..rows * dense.out_dim];
            }
            out.extend_from_slice(src);
            start = end;
        }
        Ok(out)
    }

    fn forward_train<R: RngCore>(&mut self, inputs: &Matrix, rng: &mut R) -> Result<(Vec<f64>, ForwardCache)> {
        if inputs.rows() < 2 && self.spec.any_batchnorm() {
            return Err(Error::DegenerateBatch(format!(
                "batch normalization needs at least 2 rows in train mode, got {}",
                inputs.rows()
            )));
        }
        let (scores, mut cache) = self.forward_impl(inputs, Some(rng as &mut dyn RngCore));
        let n = inputs.rows() as f64;
        for (layer, norm) in cache.layers.iter().zip(self.norms.iter_mut()) {
            let (Some(norm), Some(stats)) = (norm.as_mut(), layer.batch_stats.as_ref()) else {
                continue;
            };
            for (j, (&mean, &var)) in stats.mean.iter().zip(&stats.var).enumerate() {
                let unbiased = var * n / (n - 1.0);
                norm.running_mean[j] = (1.0 - BN_MOMENTUM) * norm.running_mean[j] + BN_MOMENTUM * mean;
                norm.running_var[j] = (1.0 - BN_MOMENTUM) * norm.running_var[j] + BN_MOMENTUM * unbiased;
            }
        }
        self.generation += 1;
        cache.generation = self.generation;
        Ok((scores, cache))
    }

    /// Shared forward pass. `rng` present means train mode.
    fn forward_impl(&self, inputs: &Matrix, mut rng: Option<&mut dyn RngCore>) -> (Vec<f64>, ForwardCache) {
        let train = rng.is_some();
        let batch = inputs.rows();
        let last = self.dense.len() - 1;
        let mut layers = Vec::with_capacity(self.dense.len());
        let mut x = inputs.clone();
        let mut scores = Vec::new();

        for (l, dense) in self.dense.iter().enumerate() {
            let width = dense.out_dim;
            let mut z = vec![0.0; batch * width];
            matmul_a_bt(x.as_slice(), &dense.weights, batch, dense.in_dim, width, &mut z);
            for row in z.chunks_exact_mut(width) {
                row.iter_mut().zip(&dense.bias).for_each(|(v, b)| *v += b);
            }
            if l == last {
                scores = z;
                layers.push(LayerCache {
                    input: x,
                    batch_stats: None,
                    normalized: None,
                    pre_relu: Vec::new(),
                    dropout: None,
                });
                break;
            }

            let mut batch_stats = None;
            let mut normalized = None;
            if let Some(norm) = &self.norms[l] {
                if train {
                    let stats = BatchStats::of(&z, batch, width);
                    let mut zhat = z.clone();
                    for row in zhat.chunks_exact_mut(width) {
                        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.inv_std) {
                            *v = (*v - m) * s;
                        }
                    }
                    for (row, hat) in z.chunks_exact_mut(width).zip(zhat.chunks_exact(width)) {
                        for j in 0..width {
                            row[j] = norm.scale[j] * hat[j] + norm.shift[j];
                        }
                    }
                    batch_stats = Some(stats);
                    normalized = Some(zhat);
                } else {
                    // Fold the running statistics into one affine map per unit.
                    let (a, b): (Vec<f64>, Vec<f64>) = (0..width)
                        .map(|j| {
                            let a = norm.scale[j] / libm::sqrt(norm.running_var[j] + BN_EPS);
                            (a, norm.shift[j] - a * norm.running_mean[j])
                        })
                        .unzip();
                    for row in z.chunks_exact_mut(width) {
                        for j in 0..width {
                            row[j] = a[j] * row[j] + b[j];
                        }
                    }
                }
            }

            let mut act: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let rate = self.spec.dropout[l];
            let dropout = match rng.as_deref_mut() {
                Some(rng) if rate > 0.0 => {
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> =
                        (0..act.len()).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
                    act.iter_mut().zip(&mask).for_each(|(a, m)| *a *= m);
                    Some(mask)
                }
                _ => None,
            };

            let next = Matrix::from_vec(batch, width, act).expect("activation shape");
            layers.push(LayerCache {
                input: core::mem::replace(&mut x, next),
                batch_stats,
                normalized,
                pre_relu: if train { z } else { Vec::new() },
                dropout,
            });
        }

        let mode = if train { Mode::Train } else { Mode::Eval };
        (scores, ForwardCache { mode, generation: self.generation, batch, layers })
    }

    /// Exact gradients of `sum_i dscore[i] * score[i]` for the batch in `cache`.
    pub fn backward(&self, cache: &ForwardCache, dscore: &[f64]) -> Result<Gradients> {
        if cache.mode != Mode::Train {
            return Err(Error::Contract("backward needs a train-mode forward cache".into()));
        }
        if cache.generation != self.generation {
            return Err(Error::Contract("forward cache is stale: parameters changed since it was produced".into()));
        }
        if dscore.len() != cache.batch {
            return Err(Error::Shape(format!("dscore has {} entries for a batch of {}", dscore.len(), cache.batch)));
        }
        let batch = cache.batch;
        let n = batch as f64;
        let mut dense_grads = Vec::with_capacity(self.dense.len());
        let mut norm_grads = Vec::with_capacity(self.dense.len());
        let mut upstream = dscore.to_vec();

        for (l, dense) in self.dense.iter().enumerate().rev() {
            let layer = &cache.layers[l];
            let width = dense.out_dim;
            let mut dz = upstream;
            let mut norm_grad = None;

            if l + 1 != self.dense.len() {
                if let Some(mask) = &layer.dropout {
                    dz.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                }
                dz.iter_mut().zip(&layer.pre_relu).for_each(|(g, &y)| {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                });
                if let (Some(norm), Some(zhat), Some(stats)) = (&self.norms[l], &layer.normalized, &layer.batch_stats) {
                    let mut dscale = vec![0.0; width];
                    let mut dshift = vec![0.0; width];
                    for (g, h) in dz.chunks_exact(width).zip(zhat.chunks_exact(width)) {
                        for j in 0..width {
                            dshift[j] += g[j];
                            dscale[j] += g[j] * h[j];
                        }
                    }
                    // dzhat = dy * scale; dz = inv_std * (dzhat - mean(dzhat) - zhat * mean(dzhat * zhat))
                    for (g, h) in dz.chunks_exact_mut(width).zip(zhat.chunks_exact(width)) {
                        for j in 0..width {
                            let mean_d = norm.scale[j] * dshift[j] / n;
                            let mean_dh = norm.scale[j] * dscale[j] / n;
                            g[j] = stats.inv_std[j] * (norm.scale[j] * g[j] - mean_d - h[j] * mean_dh);
                        }
                    }
                    norm_grad = Some(NormGrad { scale: dscale, shift: dshift });
                }
            }

            let mut dw = vec![0.0; width * dense.in_dim];
            matmul_at_b(&dz, layer.input.as_slice(), batch, width, dense.in_dim, &mut dw);
            let mut db = vec![0.0; width];
            for row in dz.chunks_exact(width) {
                db.iter_mut().zip(row).for_each(|(b, g)| *b += g);
            }
            upstream = if l > 0 {
                let mut dx = vec![0.0; batch * dense.in_dim];
                matmul_a_b(&dz, &dense.weights, batch, width, dense.in_dim, &mut dx);
                dx
            } else {
                Vec::new()
            };
            dense_grads.push(DenseGrad { weights: dw, bias: db });
            norm_grads.push(norm_grad);
        }
        dense_grads.reverse();
        norm_grads.reverse();
        Ok(Gradients { dense: dense_grads, norms: norm_grads })
    }
}

#[derive(Debug, Clone)]
struct BatchStats {
    mean: Vec<f64>,
    /// Biased (population) variance.
    var: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchStats {
    fn of(z: &[f64], batch: usize, width: usize) -> Self {
        let n = batch as f64;
        let mut mean = vec![0.0; width];
        for row in z.chunks_exact(width) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for row in z.chunks_exact(width) {
            for j in 0..width {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        let inv_std = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPS)).collect();
        BatchStats { mean, var, inv_std }
    }
}
