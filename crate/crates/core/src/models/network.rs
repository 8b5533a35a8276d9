//! Fully connected ReLU networks with a sigmoid (classification) or ReLU
//! (regression) output unit, trained with Adam on minibatches.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{holdout_groups, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Probability output trained with binary cross entropy.
    Sigmoid,
    /// Non-negative output trained with mean squared error.
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Nn1,
    Nn2,
    Nn3,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Nn1, Architecture::Nn2, Architecture::Nn3];

    pub fn hidden_sizes(self) -> &'static [usize] {
        match self {
            Architecture::Nn1 => &[256, 512, 256],
            Architecture::Nn2 => &[256, 512, 1024, 512, 256],
            Architecture::Nn3 => &[256, 512, 1024, 2048, 1024, 512, 256],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Nn1 => "nn1",
            Architecture::Nn2 => "nn2",
            Architecture::Nn3 => "nn3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub head: Head,
}

impl NetworkSpec {
    /// Hidden widths of `arch` divided by `width_divisor` (at least 1 unit).
    pub fn new(arch: Architecture, input_dim: usize, head: Head, width_divisor: usize) -> Self {
        let d = width_divisor.max(1);
        Self {
            input_dim,
            hidden_sizes: arch.hidden_sizes().iter().map(|w| (w / d).max(1)).collect(),
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(ModelError::InvalidSpec("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before the rate is halved.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn classification() -> Self {
        Self {
            epochs: 50,
            lr0: 1e-4,
            lr_min: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 1024,
            patience: 3,
            validation_fraction: 0.1,
            seed: 0,
        }
    }

    pub fn regression() -> Self {
        Self {
            epochs: 100,
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidSpec("epochs and batch size must be >= 1".into()));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0) {
            return Err(ModelError::InvalidSpec("need 0 < lr_min <= lr0".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(ModelError::InvalidSpec("validation fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Row-major `inputs × outputs` weights and a bias per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn w(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.inputs, self.outputs), &self.weights).expect("weight shape")
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.bias[..])
    }

    fn apply(&self, a: ArrayView2<f64>) -> Array2<f64> {
        a.dot(&self.w()) + &self.b()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean loss of raw output-unit values `z` against targets.
pub fn head_loss(head: Head, z: &[f64], y: &[f64]) -> f64 {
    let terms: Vec<f64> = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| match head {
            Head::Sigmoid => softplus(z) - y * z,
            Head::Relu => (z.max(0.0) - y).powi(2),
        })
        .collect();
    crate::eval::pairwise_sum(&terms) / z.len() as f64
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl Network {
    /// He-normal hidden layers, output bias at `output_bias`.
    pub fn init(spec: &NetworkSpec, output_bias: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![spec.input_dim];
        sizes.extend(&spec.hidden_sizes);
        sizes.push(1);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = k == sizes.len() - 2;
            let std = if last { (1.0 / fan_in as f64).sqrt() } else { (2.0 / fan_in as f64).sqrt() };
            let normal = Normal::new(0.0, std).expect("positive std");
            layers.push(Dense {
                inputs: fan_in,
                outputs: fan_out,
                weights: (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![if last { output_bias } else { 0.0 }; fan_out],
            });
        }
        Ok(Self { spec: spec.clone(), layers })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Inputs of every layer followed by the raw output column.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts[k].view());
            if k + 1 < self.layers.len() {
                relu_inplace(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Raw output-unit values before the head nonlinearity.
    pub fn raw_output(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            a = layer.apply(a.view());
            if k + 1 < self.layers.len() {
                relu_inplace(&mut a);
            }
        }
        a.column(0).to_vec()
    }

    /// Probabilities (sigmoid head) or non-negative values (ReLU head).
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.nrows());
        for chunk in x.axis_chunks_iter(Axis(0), 4096) {
            out.extend(self.raw_output(chunk).into_iter().map(|z| match self.spec.head {
                Head::Sigmoid => sigmoid(z),
                Head::Relu => z.max(0.0),
            }));
        }
        out
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        head_loss(self.spec.head, &self.raw_output(x), y)
    }

    /// Mean loss over the batch and its gradient for every layer.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[f64]) -> (f64, Vec<DenseGrad>) {
        let acts = self.forward_all(x);
        let z = acts.last().expect("output");
        let zs: Vec<f64> = z.column(0).to_vec();
        let loss = head_loss(self.spec.head, &zs, y);
        let n = y.len() as f64;
        let mut delta = Array2::from_shape_fn((y.len(), 1), |(r, _)| match self.spec.head {
            Head::Sigmoid => (sigmoid(zs[r]) - y[r]) / n,
            Head::Relu => {
                if zs[r] > 0.0 {
                    2.0 * (zs[r] - y[r]) / n
                } else {
                    0.0
                }
            }
        });
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let a = &acts[k];
            let dw = a.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut prev = delta.dot(&self.layers[k].w().t());
                ndarray::Zip::from(&mut prev).and(a).for_each(|d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
            grads.push(DenseGrad {
                weights: dw.iter().copied().collect(),
                bias: db.to_vec(),
            });
        }
        grads.reverse();
        (loss, grads)
    }

    /// Loss over `rows` of `x` in fixed-size chunks.
    fn eval_loss(&self, x: ArrayView2<f64>, y: &[f64], rows: &[usize], chunk: usize) -> f64 {
        let mut zs = Vec::with_capacity(rows.len());
        for idx in rows.chunks(chunk) {
            zs.extend(self.raw_output(x.select(Axis(0), idx).view()));
        }
        let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        head_loss(self.spec.head, &zs, &ys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

struct Adam {
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &[DenseGrad], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.eps);
            }
        };
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            update(&mut layer.weights, &grads[k].weights, mw, vw);
            update(&mut layer.bias, &grads[k].bias, mb, vb);
        }
    }
}

fn check_targets(head: Head, y: &[f64]) -> Result<()> {
    for &v in y {
        let ok = match head {
            Head::Sigmoid => v == 0.0 || v == 1.0,
            Head::Relu => v.is_finite() && v >= 0.0,
        };
        if !ok {
            return Err(ModelError::InvalidLabel(format!("target {v} invalid for {head:?} head")));
        }
    }
    Ok(())
}

/// Trains a network on standardized rows `x`. `groups` assigns rows to
/// storms; a fraction of whole groups is held out to drive the learning
/// rate schedule (the training loss is used when there is a single group).
pub fn train_network(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    x: ArrayView2<f64>,
    y: &[f64],
    groups: &[usize],
) -> Result<(Network, Vec<EpochLog>)> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.ncols() != spec.input_dim || y.len() != x.nrows() || groups.len() != x.nrows() {
        return Err(ModelError::InvalidSpec("input shape does not match spec".into()));
    }
    check_targets(spec.head, y)?;

    let held = holdout_groups(groups, cfg.validation_fraction, cfg.seed);
    let (mut train_rows, val_rows): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&r| !held.contains(&groups[r]));

    let mean_y = crate::eval::pairwise_sum(&train_rows.iter().map(|&r| y[r]).collect::<Vec<_>>()) / train_rows.len() as f64;
    let bias = match spec.head {
        Head::Sigmoid => {
            let p = mean_y.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
        Head::Relu => mean_y,
    };
    let mut net = Network::init(spec, bias, cfg.seed)?;
    let mut adam = Adam::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut lr = cfg.lr0;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        train_rows.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in train_rows.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), idx);
            yb.clear();
            yb.extend(idx.iter().map(|&r| y[r]));
            let (loss, grads) = net.loss_and_gradient(xb.view(), &yb);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            total += loss * idx.len() as f64;
            adam.step(&mut net, &grads, lr, cfg);
        }
        let train_loss = total / train_rows.len() as f64;
        let val_loss = (!val_rows.is_empty()).then(|| net.eval_loss(x, y, &val_rows, cfg.batch_size));
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if monitored < best {
            best = monitored;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                lr = (lr * 0.5).max(cfg.lr_min);
                stale = 0;
            }
        }
    }
    Ok((net, log))
}
