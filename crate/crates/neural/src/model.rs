//! Fully convolutional network with explicit forward and backward passes.
//!
//! Three blocks of same-padded convolution, batch normalization and ReLU,
//! followed by global average pooling and a dense layer to two logits.
//! Activations are stored channel-major: `a[c * n + t]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::series::{NormalizedSeries, MIN_LENGTH};
use crate::{NeuralError, Result};

pub const ANOMALOUS: usize = 0;
pub const REGULAR: usize = 1;
pub const CLASSES: usize = 2;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const MODEL_FORMAT: &str = "diagnostica-fcn";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcnConfig {
    pub input_length: usize,
    pub filters: [usize; 3],
    pub kernels: [usize; 3],
}

impl FcnConfig {
    /// Desk-scale profile.
    pub fn tiny(input_length: usize) -> Self {
        FcnConfig { input_length, filters: [16, 32, 16], kernels: [8, 5, 3] }
    }

    /// Baseline profile.
    pub fn standard(input_length: usize) -> Self {
        FcnConfig { input_length, filters: [128, 256, 128], kernels: [8, 5, 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length < MIN_LENGTH {
            return Err(NeuralError::Config(format!("input length must be at least {MIN_LENGTH}")));
        }
        if self.filters.contains(&0) || self.kernels.contains(&0) {
            return Err(NeuralError::Config("filters and kernels must be positive".into()));
        }
        if self.kernels.iter().any(|&k| k > self.input_length) {
            return Err(NeuralError::Config("kernel longer than the input".into()));
        }
        Ok(())
    }

    fn channels(&self, block: usize) -> (usize, usize) {
        let c_in = if block == 0 { 1 } else { self.filters[block - 1] };
        (c_in, self.filters[block])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockLayout {
    c_in: usize,
    c_out: usize,
    k: usize,
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    blocks: [BlockLayout; 3],
    dense_w: usize,
    dense_b: usize,
    total: usize,
}

impl Layout {
    fn new(config: &FcnConfig) -> Self {
        let mut offset = 0;
        let mut take = |len: usize| {
            let at = offset;
            offset += len;
            at
        };
        let blocks = [0, 1, 2].map(|i| {
            let (c_in, c_out) = config.channels(i);
            let k = config.kernels[i];
            BlockLayout { c_in, c_out, k, w: take(c_out * c_in * k), b: take(c_out), gamma: take(c_out), beta: take(c_out) }
        });
        let f = config.filters[2];
        let dense_w = take(CLASSES * f);
        let dense_b = take(CLASSES);
        Layout { blocks, dense_w, dense_b, total: offset }
    }
}

/// Class probabilities with the best guess and its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: [f64; CLASSES],
    pub best_guess: usize,
    pub uncertainty: f64,
}

impl Prediction {
    pub fn from_logits(logits: [f64; CLASSES]) -> Self {
        let max = logits[0].max(logits[1]);
        let e = logits.map(|l| (l - max).exp());
        let sum = e[0] + e[1];
        let probabilities = e.map(|x| x / sum);
        let best_guess = if probabilities[1] > probabilities[0] { 1 } else { 0 };
        Prediction { probabilities, best_guess, uncertainty: 1.0 - probabilities[best_guess] }
    }

    pub fn is_anomalous(&self) -> bool {
        self.best_guess == ANOMALOUS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in the normalization layers.
    Train,
    /// Running statistics in the normalization layers.
    Infer,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    input: Vec<Vec<f64>>,
    xhat: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    pub(crate) batch_mean: Vec<f64>,
    pub(crate) batch_var: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct BatchCache {
    mode: Mode,
    pub(crate) blocks: Vec<BlockCache>,
    /// Output of the last block per sample.
    pub(crate) features: Vec<Vec<f64>>,
    pooled: Vec<Vec<f64>>,
    pub(crate) logits: Vec<[f64; CLASSES]>,
}

pub(crate) struct Gradients {
    pub params: Vec<f64>,
    pub features: Vec<Vec<f64>>,
}

/// Result of a single-series inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub prediction: Prediction,
    pub logits: [f64; CLASSES],
    /// Last block's feature maps, `channels x length`, channel-major.
    pub features: Vec<f64>,
    pub channels: usize,
    pub length: usize,
}

impl ForwardOutput {
    pub fn feature_map(&self, k: usize) -> &[f64] {
        &self.features[k * self.length..(k + 1) * self.length]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct FcnModel {
    config: FcnConfig,
    seed: u64,
    params: Vec<f64>,
    running_mean: [Vec<f64>; 3],
    running_var: [Vec<f64>; 3],
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: FcnConfig,
    seed: u64,
    parameter_count: usize,
    params: Vec<f64>,
    running_mean: [Vec<f64>; 3],
    running_var: [Vec<f64>; 3],
}

impl From<FcnModel> for ModelFile {
    fn from(m: FcnModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: m.config,
            seed: m.seed,
            parameter_count: m.params.len(),
            params: m.params,
            running_mean: m.running_mean,
            running_var: m.running_var,
        }
    }
}

impl TryFrom<ModelFile> for FcnModel {
    type Error = NeuralError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(NeuralError::Config(format!("unsupported model file {} v{}", f.format, f.version)));
        }
        f.config.validate()?;
        let layout = Layout::new(&f.config);
        let stats_ok = (0..3).all(|i| f.running_mean[i].len() == f.config.filters[i] && f.running_var[i].len() == f.config.filters[i]);
        if f.params.len() != layout.total || f.parameter_count != layout.total || !stats_ok {
            return Err(NeuralError::Shape("parameter count does not match the architecture".into()));
        }
        if f.params.iter().chain(f.running_mean.iter().flatten()).chain(f.running_var.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(NeuralError::Config("model file holds non-finite values".into()));
        }
        Ok(FcnModel {
            config: f.config,
            seed: f.seed,
            params: f.params,
            running_mean: f.running_mean,
            running_var: f.running_var,
            layout,
        })
    }
}

fn conv_forward(x: &[f64], n: usize, w: &[f64], b: &[f64], l: &BlockLayout) -> Vec<f64> {
    let pad = (l.k - 1) / 2;
    let mut z = vec![0.0; l.c_out * n];
    for o in 0..l.c_out {
        let zo = &mut z[o * n..(o + 1) * n];
        zo.fill(b[o]);
        for i in 0..l.c_in {
            let xi = &x[i * n..(i + 1) * n];
            for j in 0..l.k {
                let wv = w[(o * l.c_in + i) * l.k + j];
                let (lo, hi) = (pad.saturating_sub(j), (n + pad).saturating_sub(j).min(n));
                for t in lo..hi {
                    zo[t] += wv * xi[t + j - pad];
                }
            }
        }
    }
    z
}

fn conv_backward(x: &[f64], dz: &[f64], n: usize, w: &[f64], l: &BlockLayout, dw: &mut [f64], db: &mut [f64], dx: Option<&mut [f64]>) {
    let pad = (l.k - 1) / 2;
    let mut dx = dx;
    for o in 0..l.c_out {
        let dzo = &dz[o * n..(o + 1) * n];
        db[o] += dzo.iter().sum::<f64>();
        for i in 0..l.c_in {
            let xi = &x[i * n..(i + 1) * n];
            for j in 0..l.k {
                let idx = (o * l.c_in + i) * l.k + j;
                let (lo, hi) = (pad.saturating_sub(j), (n + pad).saturating_sub(j).min(n));
                let mut acc = 0.0;
                for t in lo..hi {
                    acc += dzo[t] * xi[t + j - pad];
                }
                dw[idx] += acc;
                if let Some(dx) = dx.as_deref_mut() {
                    let wv = w[idx];
                    let dxi = &mut dx[i * n..(i + 1) * n];
                    for t in lo..hi {
                        dxi[t + j - pad] += dzo[t] * wv;
                    }
                }
            }
        }
    }
}

impl FcnModel {
    /// He-initialized convolutions, unit normalization, small dense weights.
    pub fn new(config: FcnConfig, seed: u64) -> Result<Self> {
        let mut model = FcnModel::zeros(config)?;
        model.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = model.layout.clone();
        for l in &layout.blocks {
            let std = (2.0 / (l.c_in * l.k) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut model.params[l.w..l.w + l.c_out * l.c_in * l.k] {
                *p = normal.sample(&mut rng);
            }
            model.params[l.gamma..l.gamma + l.c_out].fill(1.0);
        }
        let f = config.filters[2];
        let normal = Normal::new(0.0, (1.0 / f as f64).sqrt()).expect("positive std");
        for p in &mut model.params[layout.dense_w..layout.dense_w + CLASSES * f] {
            *p = normal.sample(&mut rng);
        }
        Ok(model)
    }

    /// All parameters zero; running statistics at their initial values.
    pub fn zeros(config: FcnConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(FcnModel {
            config,
            seed: 0,
            params: vec![0.0; layout.total],
            running_mean: config.filters.map(|f| vec![0.0; f]),
            running_var: config.filters.map(|f| vec![1.0; f]),
            layout,
        })
    }

    pub fn config(&self) -> &FcnConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Copy with every parameter shifted by uniform noise in `[-scale, scale]`,
    /// moving it off the exact zeros of a fresh initialization.
    pub fn jittered(&self, seed: u64, scale: f64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = self.clone();
        for p in &mut m.params {
            *p += rng.random_range(-scale..=scale);
        }
        m
    }

    /// Sets the dense-layer bias; used to build reference models.
    pub fn set_dense_bias(&mut self, bias: [f64; CLASSES]) {
        let at = self.layout.dense_b;
        self.params[at..at + CLASSES].copy_from_slice(&bias);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| NeuralError::Config(format!("invalid model file: {e}")))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_length(&self, len: usize) -> Result<()> {
        if len != self.config.input_length {
            return Err(NeuralError::Shape(format!("model expects {} samples, got {len}", self.config.input_length)));
        }
        Ok(())
    }

    pub(crate) fn forward_batch(&self, xs: &[&[f64]], mode: Mode) -> Result<BatchCache> {
        for x in xs {
            self.check_length(x.len())?;
        }
        let n = self.config.input_length;
        let p = &self.params;
        let mut current: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
        let mut blocks = Vec::with_capacity(3);
        for (bi, l) in self.layout.blocks.iter().enumerate() {
            let z: Vec<Vec<f64>> = current
                .iter()
                .map(|x| conv_forward(x, n, &p[l.w..l.w + l.c_out * l.c_in * l.k], &p[l.b..l.b + l.c_out], l))
                .collect();
            let (mean, var) = match mode {
                Mode::Infer => (self.running_mean[bi].clone(), self.running_var[bi].clone()),
                Mode::Train => {
                    let m = (xs.len() * n) as f64;
                    let mut mean = vec![0.0; l.c_out];
                    let mut var = vec![0.0; l.c_out];
                    for c in 0..l.c_out {
                        mean[c] = z.iter().map(|zs| zs[c * n..(c + 1) * n].iter().sum::<f64>()).sum::<f64>() / m;
                        var[c] = z
                            .iter()
                            .map(|zs| zs[c * n..(c + 1) * n].iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>())
                            .sum::<f64>()
                            / m;
                    }
                    (mean, var)
                }
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = z;
            let mut pre = Vec::with_capacity(xs.len());
            for zs in &mut xhat {
                let mut ys = vec![0.0; l.c_out * n];
                for c in 0..l.c_out {
                    let (g, bt) = (p[l.gamma + c], p[l.beta + c]);
                    for t in c * n..(c + 1) * n {
                        zs[t] = (zs[t] - mean[c]) * inv_std[c];
                        ys[t] = g * zs[t] + bt;
                    }
                }
                pre.push(ys);
            }
            let out: Vec<Vec<f64>> = pre.iter().map(|ys| ys.iter().map(|v| v.max(0.0)).collect()).collect();
            let input = std::mem::replace(&mut current, out);
            blocks.push(BlockCache { input, xhat, pre, inv_std, batch_mean: mean, batch_var: var });
        }
        let f = self.config.filters[2];
        let pooled: Vec<Vec<f64>> =
            current.iter().map(|a| (0..f).map(|k| a[k * n..(k + 1) * n].iter().sum::<f64>() / n as f64).collect()).collect();
        let logits = pooled.iter().map(|g| self.head(g)).collect();
        Ok(BatchCache { mode, blocks, features: current, pooled, logits })
    }

    fn head(&self, pooled: &[f64]) -> [f64; CLASSES] {
        let f = pooled.len();
        let (w, b) = (&self.params[self.layout.dense_w..], &self.params[self.layout.dense_b..]);
        [0, 1].map(|c| b[c] + (0..f).map(|k| w[c * f + k] * pooled[k]).sum::<f64>())
    }

    /// Logits computed from given last-block feature maps.
    pub fn logits_from_features(&self, features: &[f64]) -> [f64; CLASSES] {
        let (f, n) = (self.config.filters[2], self.config.input_length);
        let pooled: Vec<f64> = (0..f).map(|k| features[k * n..(k + 1) * n].iter().sum::<f64>() / n as f64).collect();
        self.head(&pooled)
    }

    /// Backpropagates `dlogits` (one row per sample) through a cached pass.
    pub(crate) fn backward_batch(&self, cache: &BatchCache, dlogits: &[[f64; CLASSES]]) -> Gradients {
        let n = self.config.input_length;
        let f = self.config.filters[2];
        let p = &self.params;
        let mut grad = vec![0.0; self.layout.total];
        let (dw_at, db_at) = (self.layout.dense_w, self.layout.dense_b);
        let mut upstream: Vec<Vec<f64>> = Vec::with_capacity(dlogits.len());
        for (s, dl) in dlogits.iter().enumerate() {
            for c in 0..CLASSES {
                grad[db_at + c] += dl[c];
                for k in 0..f {
                    grad[dw_at + c * f + k] += dl[c] * cache.pooled[s][k];
                }
            }
            let mut da = vec![0.0; f * n];
            for k in 0..f {
                let dg = (0..CLASSES).map(|c| p[dw_at + c * f + k] * dl[c]).sum::<f64>() / n as f64;
                da[k * n..(k + 1) * n].fill(dg);
            }
            upstream.push(da);
        }
        let features = upstream.clone();
        let batch = dlogits.len();
        for (bi, l) in self.layout.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[bi];
            let mut dxhat: Vec<Vec<f64>> = Vec::with_capacity(batch);
            for s in 0..batch {
                let mut d = upstream[s].clone();
                for c in 0..l.c_out {
                    let g = p[l.gamma + c];
                    for t in c * n..(c + 1) * n {
                        let dy = if bc.pre[s][t] > 0.0 { d[t] } else { 0.0 };
                        grad[l.gamma + c] += dy * bc.xhat[s][t];
                        grad[l.beta + c] += dy;
                        d[t] = dy * g;
                    }
                }
                dxhat.push(d);
            }
            let dz: Vec<Vec<f64>> = match cache.mode {
                Mode::Infer => dxhat
                    .into_iter()
                    .map(|mut d| {
                        for c in 0..l.c_out {
                            for v in &mut d[c * n..(c + 1) * n] {
                                *v *= bc.inv_std[c];
                            }
                        }
                        d
                    })
                    .collect(),
                Mode::Train => {
                    let m = (batch * n) as f64;
                    let mut sum = vec![0.0; l.c_out];
                    let mut dot = vec![0.0; l.c_out];
                    for s in 0..batch {
                        for c in 0..l.c_out {
                            for t in c * n..(c + 1) * n {
                                sum[c] += dxhat[s][t];
                                dot[c] += dxhat[s][t] * bc.xhat[s][t];
                            }
                        }
                    }
                    dxhat
                        .into_iter()
                        .enumerate()
                        .map(|(s, mut d)| {
                            for c in 0..l.c_out {
                                for t in c * n..(c + 1) * n {
                                    d[t] = bc.inv_std[c] / m * (m * d[t] - sum[c] - bc.xhat[s][t] * dot[c]);
                                }
                            }
                            d
                        })
                        .collect()
                }
            };
            let mut next = Vec::with_capacity(batch);
            let (w_range, b_range) = (l.w..l.w + l.c_out * l.c_in * l.k, l.b..l.b + l.c_out);
            for s in 0..batch {
                let mut dx = if bi > 0 { Some(vec![0.0; l.c_in * n]) } else { None };
                let (head, tail) = grad.split_at_mut(b_range.start);
                conv_backward(
                    &bc.input[s],
                    &dz[s],
                    n,
                    &p[w_range.clone()],
                    l,
                    &mut head[w_range.clone()],
                    &mut tail[..l.c_out],
                    dx.as_deref_mut(),
                );
                next.push(dx.unwrap_or_default());
            }
            upstream = next;
        }
        Gradients { params: grad, features }
    }

    /// Blends batch statistics into the running averages.
    pub(crate) fn update_running_stats(&mut self, cache: &BatchCache) {
        for (bi, bc) in cache.blocks.iter().enumerate() {
            for c in 0..bc.batch_mean.len() {
                let rm = &mut self.running_mean[bi][c];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * bc.batch_mean[c];
                let rv = &mut self.running_var[bi][c];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * bc.batch_var[c];
            }
        }
    }

    /// Replaces the running statistics with exact statistics of `xs` under
    /// the current parameters.
    pub(crate) fn recalibrate(&mut self, xs: &[&[f64]]) -> Result<()> {
        let cache = self.forward_batch(xs, Mode::Train)?;
        for (bi, bc) in cache.blocks.iter().enumerate() {
            self.running_mean[bi].clone_from(&bc.batch_mean);
            self.running_var[bi].clone_from(&bc.batch_var);
        }
        Ok(())
    }

    /// Inference on one normalized series.
    pub fn forward(&self, v: &NormalizedSeries) -> Result<ForwardOutput> {
        let mut cache = self.forward_batch(&[&v.values], Mode::Infer)?;
        let logits = cache.logits[0];
        Ok(ForwardOutput {
            prediction: Prediction::from_logits(logits),
            logits,
            features: cache.features.pop().expect("one sample"),
            channels: self.config.filters[2],
            length: self.config.input_length,
        })
    }

    pub fn predict(&self, v: &NormalizedSeries) -> Result<Prediction> {
        Ok(self.forward(v)?.prediction)
    }

    /// Gradient of the pre-softmax logit of `class` with respect to every
    /// parameter and to the last block's feature maps, in inference mode.
    pub fn logit_gradients(&self, values: &[f64], class: usize) -> Result<(ForwardOutput, Vec<f64>, Vec<f64>)> {
        if class >= CLASSES {
            return Err(NeuralError::Config(format!("class {class} out of range")));
        }
        let cache = self.forward_batch(&[values], Mode::Infer)?;
        let mut onehot = [0.0; CLASSES];
        onehot[class] = 1.0;
        let mut grads = self.backward_batch(&cache, &[onehot]);
        let logits = cache.logits[0];
        let out = ForwardOutput {
            prediction: Prediction::from_logits(logits),
            logits,
            features: cache.features.into_iter().next().expect("one sample"),
            channels: self.config.filters[2],
            length: self.config.input_length,
        };
        Ok((out, grads.params, grads.features.pop().expect("one sample")))
    }

    pub(crate) fn logit(&self, values: &[f64], class: usize, mode: Mode) -> f64 {
        self.forward_batch(&[values], mode).expect("checked length").logits[0][class]
    }
}

/// Mean cross-entropy of a batch and its gradient with respect to the logits.
pub(crate) fn cross_entropy(logits: &[[f64; CLASSES]], labels: &[usize]) -> (f64, Vec<[f64; CLASSES]>) {
    let b = logits.len() as f64;
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| {
            let max = l[0].max(l[1]);
            let lse = max + ((l[0] - max).exp() + (l[1] - max).exp()).ln();
            loss += lse - l[y];
            let p = Prediction::from_logits(*l).probabilities;
            [0, 1].map(|c| (p[c] - if c == y { 1.0 } else { 0.0 }) / b)
        })
        .collect();
    (loss / b, grads)
}
