use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{InitScheme, LayerSpec};
use super::tensor::{matmul, Param, Real, Tensor};
use crate::error::{invalid, Error, Result};

fn missing_forward(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a train-mode forward"))
}

fn expect_dims<T: Real>(x: &Tensor<T>, per_sample: &[usize], layer: &str) -> Result<usize> {
    if x.shape().len() != per_sample.len() + 1 || &x.shape()[1..] != per_sample {
        return Err(invalid(format!("{layer} expects [B, {per_sample:?}], got {:?}", x.shape())));
    }
    if x.batch() == 0 {
        return Err(invalid(format!("{layer} got an empty batch")));
    }
    Ok(x.batch())
}

fn init_weights<T: Real>(scheme: InitScheme, fan_in: usize, fan_out: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let (fi, fo) = (fan_in as f64, fan_out as f64);
    let draw = |d: &dyn Fn(&mut ChaCha8Rng) -> f64, rng: &mut ChaCha8Rng| (0..n).map(|_| T::lit(d(rng))).collect();
    let uniform = |a: f64| Uniform::new_inclusive(-a, a).expect("finite bound");
    let normal = |s: f64| Normal::new(0.0, s).expect("finite std");
    match scheme {
        InitScheme::Standard => {
            let u = uniform(1.0 / fi.sqrt());
            draw(&|r| u.sample(r), rng)
        }
        InitScheme::XavierUniform => {
            let u = uniform((6.0 / (fi + fo)).sqrt());
            draw(&|r| u.sample(r), rng)
        }
        InitScheme::XavierNormal => {
            let d = normal((2.0 / (fi + fo)).sqrt());
            draw(&|r| d.sample(r), rng)
        }
        InitScheme::KaimingUniform => {
            let u = uniform((6.0 / fi).sqrt());
            draw(&|r| u.sample(r), rng)
        }
        InitScheme::KaimingNormal => {
            let d = normal((2.0 / fi).sqrt());
            draw(&|r| d.sample(r), rng)
        }
    }
}

fn init_bias<T: Real>(scheme: InitScheme, fan_in: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    match scheme {
        InitScheme::Standard => {
            let a = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| T::lit(rng.random_range(-a..=a))).collect()
        }
        _ => vec![T::zero(); n],
    }
}

#[derive(Clone, Debug)]
struct ConvCache<T> {
    cols: Vec<T>,
    batch: usize,
}

/// 1D convolution over `[B, C, L]`, weights `[out, in, kernel]`.
#[derive(Clone, Debug)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<ConvCache<T>>,
}

impl<T: Real> Conv1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        in_len: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        scheme: InitScheme,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel;
        let weight = init_weights(scheme, fan_in, out_channels * kernel, out_channels * fan_in, rng);
        let bias = init_bias(scheme, fan_in, out_channels, rng);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_len,
            out_len: (in_len + 2 * padding - kernel) / stride + 1,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
        }
    }

    /// Columns `[in * kernel, B * out_len]`.
    fn im2col(&self, x: &[T], batch: usize) -> Vec<T> {
        let (ck, n) = (self.in_channels * self.kernel, batch * self.out_len);
        let mut cols = vec![T::zero(); ck * n];
        for c in 0..self.in_channels {
            for k in 0..self.kernel {
                let row = &mut cols[(c * self.kernel + k) * n..(c * self.kernel + k + 1) * n];
                for b in 0..batch {
                    let src = &x[(b * self.in_channels + c) * self.in_len..][..self.in_len];
                    for o in 0..self.out_len {
                        let pos = (o * self.stride + k) as isize - self.padding as isize;
                        if pos >= 0 && (pos as usize) < self.in_len {
                            row[b * self.out_len + o] = src[pos as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn run(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
        let batch = expect_dims(x, &[self.in_channels, self.in_len], "conv1d")?;
        let cols = self.im2col(x.data(), batch);
        let n = batch * self.out_len;
        let mut prod = vec![T::zero(); self.out_channels * n];
        matmul(false, false, self.out_channels, self.in_channels * self.kernel, n, &self.weight.value, &cols, false, &mut prod);
        let mut y = Tensor::zeros(vec![batch, self.out_channels, self.out_len]);
        let out = y.data_mut();
        for co in 0..self.out_channels {
            let bias = self.bias.value[co];
            for b in 0..batch {
                let src = &prod[co * n + b * self.out_len..][..self.out_len];
                let dst = &mut out[(b * self.out_channels + co) * self.out_len..][..self.out_len];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
        Ok((y, cols))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_forward("conv1d"))?;
        let batch = cache.batch;
        expect_dims(dy, &[self.out_channels, self.out_len], "conv1d gradient")?;
        let n = batch * self.out_len;
        let ck = self.in_channels * self.kernel;
        let mut dprod = vec![T::zero(); self.out_channels * n];
        for co in 0..self.out_channels {
            let mut db = T::zero();
            for b in 0..batch {
                let src = &dy.data()[(b * self.out_channels + co) * self.out_len..][..self.out_len];
                dprod[co * n + b * self.out_len..][..self.out_len].copy_from_slice(src);
                db += src.iter().copied().sum::<T>();
            }
            self.bias.grad[co] += db;
        }
        matmul(false, true, self.out_channels, n, ck, &dprod, &cache.cols, true, &mut self.weight.grad);
        let mut dcols = vec![T::zero(); ck * n];
        matmul(true, false, ck, self.out_channels, n, &self.weight.value, &dprod, false, &mut dcols);
        let mut dx = Tensor::zeros(vec![batch, self.in_channels, self.in_len]);
        let dxd = dx.data_mut();
        for c in 0..self.in_channels {
            for k in 0..self.kernel {
                let row = &dcols[(c * self.kernel + k) * n..][..n];
                for b in 0..batch {
                    let dst = &mut dxd[(b * self.in_channels + c) * self.in_len..][..self.in_len];
                    for o in 0..self.out_len {
                        let pos = (o * self.stride + k) as isize - self.padding as isize;
                        if pos >= 0 && (pos as usize) < self.in_len {
                            dst[pos as usize] += row[b * self.out_len + o];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Max pooling without padding; ties resolve to the first position.
#[derive(Clone, Debug)]
pub struct MaxPool1d {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_len: usize,
    pub out_len: usize,
    cache: Option<(usize, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(channels: usize, in_len: usize, kernel: usize, stride: usize) -> Self {
        Self { channels, kernel, stride, in_len, out_len: (in_len - kernel) / stride + 1, cache: None }
    }

    fn run<T: Real>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let batch = expect_dims(x, &[self.channels, self.in_len], "max pool")?;
        let rows = batch * self.channels;
        let mut y = Tensor::zeros(vec![batch, self.channels, self.out_len]);
        let mut arg = vec![0; rows * self.out_len];
        for r in 0..rows {
            let src = &x.data()[r * self.in_len..][..self.in_len];
            for o in 0..self.out_len {
                let start = o * self.stride;
                let mut best = start;
                for j in start + 1..start + self.kernel {
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                y.data_mut()[r * self.out_len + o] = src[best];
                arg[r * self.out_len + o] = r * self.in_len + best;
            }
        }
        Ok((y, arg))
    }

    fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, arg) = self.cache.take().ok_or_else(|| missing_forward("max pool"))?;
        expect_dims(dy, &[self.channels, self.out_len], "max pool gradient")?;
        let mut dx = Tensor::zeros(vec![batch, self.channels, self.in_len]);
        for (&a, &g) in arg.iter().zip(dy.data()) {
            dx.data_mut()[a] += g;
        }
        Ok(dx)
    }
}

#[derive(Clone, Debug)]
struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    batch: usize,
}

/// Batch normalization over `[B, C, L]` (per channel) or `[B, F]` (per feature).
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub channels: usize,
    /// Positions per channel: `L` for 3D input, 1 for 2D.
    pub spatial: usize,
    pub per_sample: Vec<usize>,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<NormCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(per_sample: &[usize], momentum: f64, eps: f64) -> Self {
        let (channels, spatial) = match per_sample {
            [c, l] => (*c, *l),
            [f] => (*f, 1),
            _ => unreachable!("shape checked by the model config"),
        };
        Self {
            channels,
            spatial,
            per_sample: per_sample.to_vec(),
            momentum,
            eps,
            gamma: Param::new(vec![T::one(); channels]),
            beta: Param::new(vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    fn index(&self, b: usize, c: usize, l: usize) -> usize {
        (b * self.channels + c) * self.spatial + l
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_dims(x, &self.per_sample, "batch norm")?;
        let eps = T::lit(self.eps);
        let mut y = x.clone();
        for c in 0..self.channels {
            let scale = self.gamma.value[c] / (self.running_var[c] + eps).sqrt();
            let shift = self.beta.value[c] - self.running_mean[c] * scale;
            for b in 0..batch {
                for l in 0..self.spatial {
                    let i = self.index(b, c, l);
                    y.data_mut()[i] = x.data()[i] * scale + shift;
                }
            }
        }
        Ok(y)
    }

    fn train_forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.batch_forward(x, self.momentum)
    }

    /// Normalizes with batch statistics and blends them into the running
    /// statistics with weight `momentum`.
    fn batch_forward(&mut self, x: &Tensor<T>, momentum: f64) -> Result<Tensor<T>> {
        let batch = expect_dims(x, &self.per_sample, "batch norm")?;
        if batch < 2 {
            return Err(Error::BatchTooSmall(batch));
        }
        let n = batch * self.spatial;
        let nt = T::lit(n as f64);
        let (eps, m) = (T::lit(self.eps), T::lit(momentum));
        let mut y = Tensor::zeros(x.shape().to_vec());
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let idx = |b: usize, l: usize| self.index(b, c, l);
            let mut mean = T::zero();
            for b in 0..batch {
                for l in 0..self.spatial {
                    mean += x.data()[idx(b, l)];
                }
            }
            mean = mean / nt;
            let mut var = T::zero();
            for b in 0..batch {
                for l in 0..self.spatial {
                    let d = x.data()[idx(b, l)] - mean;
                    var += d * d;
                }
            }
            var = var / nt;
            let is = T::one() / (var + eps).sqrt();
            inv_std[c] = is;
            for b in 0..batch {
                for l in 0..self.spatial {
                    let i = idx(b, l);
                    let h = (x.data()[i] - mean) * is;
                    xhat[i] = h;
                    y.data_mut()[i] = self.gamma.value[c] * h + self.beta.value[c];
                }
            }
            let unbiased = var * nt / T::lit((n - 1) as f64);
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * mean;
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * unbiased;
        }
        self.cache = Some(NormCache { xhat, inv_std, batch });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| missing_forward("batch norm"))?;
        expect_dims(dy, &self.per_sample, "batch norm gradient")?;
        let batch = cache.batch;
        let nt = T::lit((batch * self.spatial) as f64);
        let mut dx = Tensor::zeros(dy.shape().to_vec());
        for c in 0..self.channels {
            let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
            for b in 0..batch {
                for l in 0..self.spatial {
                    let i = self.index(b, c, l);
                    sum_dy += dy.data()[i];
                    sum_dy_xhat += dy.data()[i] * cache.xhat[i];
                }
            }
            self.gamma.grad[c] += sum_dy_xhat;
            self.beta.grad[c] += sum_dy;
            let k = self.gamma.value[c] * cache.inv_std[c];
            let (mean_dy, mean_dy_xhat) = (sum_dy / nt, sum_dy_xhat / nt);
            for b in 0..batch {
                for l in 0..self.spatial {
                    let i = self.index(b, c, l);
                    dx.data_mut()[i] = k * (dy.data()[i] - mean_dy - cache.xhat[i] * mean_dy_xhat);
                }
            }
        }
        Ok(dx)
    }
}

/// Inverted dropout: kept values are scaled by `1 / (1 - p)` during training.
#[derive(Clone, Debug)]
pub struct Dropout<T> {
    pub p: f64,
    cache: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(p: f64) -> Self {
        Self { p, cache: None }
    }

    fn train_forward(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Tensor<T> {
        let keep = T::lit(1.0 / (1.0 - self.p));
        let mask: Vec<T> =
            (0..x.len()).map(|_| if rng.random::<f64>() < self.p { T::zero() } else { keep }).collect();
        let mut y = x.clone();
        y.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
        self.cache = Some(mask);
        y
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.cache.take().ok_or_else(|| missing_forward("dropout"))?;
        if mask.len() != dy.len() {
            return Err(invalid("dropout gradient does not match its forward"));
        }
        let mut dx = dy.clone();
        dx.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
        Ok(dx)
    }
}

/// Fully connected layer, weights `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, scheme: InitScheme, rng: &mut ChaCha8Rng) -> Self {
        let weight = init_weights(scheme, inputs, outputs, inputs * outputs, rng);
        let bias = init_bias(scheme, inputs, outputs, rng);
        Self { inputs, outputs, weight: Param::new(weight), bias: Param::new(bias), cache: None }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = expect_dims(x, &[self.inputs], "linear")?;
        let mut y = Tensor::zeros(vec![batch, self.outputs]);
        matmul(false, true, batch, self.inputs, self.outputs, x.data(), &self.weight.value, false, y.data_mut());
        for row in y.data_mut().chunks_exact_mut(self.outputs) {
            row.iter_mut().zip(&self.bias.value).for_each(|(v, &b)| *v += b);
        }
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| missing_forward("linear"))?;
        let batch = expect_dims(dy, &[self.outputs], "linear gradient")?;
        if batch != x.batch() {
            return Err(invalid("linear gradient batch does not match its forward"));
        }
        matmul(true, false, self.outputs, batch, self.inputs, dy.data(), x.data(), true, &mut self.weight.grad);
        for row in dy.data().chunks_exact(self.outputs) {
            self.bias.grad.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
        }
        let mut dx = Tensor::zeros(vec![batch, self.inputs]);
        matmul(false, false, batch, self.outputs, self.inputs, dy.data(), &self.weight.value, false, dx.data_mut());
        Ok(dx)
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    MaxPool1d(MaxPool1d),
    BatchNorm(BatchNorm<T>),
    Dropout(Dropout<T>),
    Linear(Linear<T>),
    Relu(Option<Vec<bool>>),
    Flatten(Vec<usize>, Option<usize>),
}

impl<T: Real> Layer<T> {
    /// Builds a layer for per-sample input shape `input`, already validated by the model config.
    pub fn build(spec: &LayerSpec, input: &[usize], scheme: InitScheme, rng: &mut ChaCha8Rng) -> Self {
        match *spec {
            LayerSpec::Conv1d { out_channels, kernel, stride, padding } => {
                Self::Conv1d(Conv1d::new(input[0], input[1], out_channels, kernel, stride, padding, scheme, rng))
            }
            LayerSpec::MaxPool1d { kernel, stride } => Self::MaxPool1d(MaxPool1d::new(input[0], input[1], kernel, stride)),
            LayerSpec::BatchNorm { momentum, eps } => Self::BatchNorm(BatchNorm::new(input, momentum, eps)),
            LayerSpec::Dropout { p } => Self::Dropout(Dropout::new(p)),
            LayerSpec::Linear { units } => Self::Linear(Linear::new(input[0], units, scheme, rng)),
            LayerSpec::Relu => Self::Relu(None),
            LayerSpec::Flatten => Self::Flatten(input.to_vec(), None),
        }
    }

    /// Eval-mode forward; does not touch any cache.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Self::Conv1d(l) => Ok(l.run(x)?.0),
            Self::MaxPool1d(l) => Ok(l.run(x)?.0),
            Self::BatchNorm(l) => l.infer(x),
            Self::Dropout(_) => Ok(x.clone()),
            Self::Linear(l) => l.infer(x),
            Self::Relu(_) => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
                Ok(y)
            }
            Self::Flatten(shape, _) => {
                let batch = expect_dims(x, shape, "flatten")?;
                x.clone().reshape(vec![batch, shape.iter().product()])
            }
        }
    }

    /// Train-mode forward, recording what [`Layer::backward`] needs.
    pub fn forward(&mut self, x: &Tensor<T>, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
        match self {
            Self::Conv1d(l) => {
                let (y, cols) = l.run(x)?;
                l.cache = Some(ConvCache { cols, batch: x.batch() });
                Ok(y)
            }
            Self::MaxPool1d(l) => {
                let (y, arg) = l.run(x)?;
                l.cache = Some((x.batch(), arg));
                Ok(y)
            }
            Self::BatchNorm(l) => l.train_forward(x),
            Self::Dropout(l) => Ok(l.train_forward(x, rng)),
            Self::Linear(l) => {
                let y = l.infer(x)?;
                l.cache = Some(x.clone());
                Ok(y)
            }
            Self::Relu(cache) => {
                let mut y = x.clone();
                let mask: Vec<bool> = y.data().iter().map(|&v| v > T::zero()).collect();
                y.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| if !m { *v = T::zero() });
                *cache = Some(mask);
                Ok(y)
            }
            Self::Flatten(shape, cache) => {
                let batch = expect_dims(x, shape, "flatten")?;
                *cache = Some(batch);
                x.clone().reshape(vec![batch, shape.iter().product()])
            }
        }
    }

    /// Forward for batch-norm recalibration: dropout off, batch norms
    /// normalize with batch statistics and average them into the running
    /// statistics with weight `1 / (k + 1)` for the `k`-th batch.
    pub fn calibrate(&mut self, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
        match self {
            Self::BatchNorm(l) => l.batch_forward(x, 1.0 / (k + 1) as f64),
            other => other.infer(x),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Self::Conv1d(l) => l.backward(dy),
            Self::MaxPool1d(l) => l.backward(dy),
            Self::BatchNorm(l) => l.backward(dy),
            Self::Dropout(l) => l.backward(dy),
            Self::Linear(l) => l.backward(dy),
            Self::Relu(cache) => {
                let mask = cache.take().ok_or_else(|| missing_forward("relu"))?;
                if mask.len() != dy.len() {
                    return Err(invalid("relu gradient does not match its forward"));
                }
                let mut dx = dy.clone();
                dx.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| if !m { *v = T::zero() });
                Ok(dx)
            }
            Self::Flatten(shape, cache) => {
                let batch = cache.take().ok_or_else(|| missing_forward("flatten"))?;
                let mut full = vec![batch];
                full.extend_from_slice(shape);
                dy.clone().reshape(full)
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Self::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Self::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Self::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Self::Conv1d(l) => vec![&l.weight, &l.bias],
            Self::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Self::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<&Vec<T>> {
        match self {
            Self::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        match self {
            Self::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Self::Conv1d(l) => l.cache = None,
            Self::MaxPool1d(l) => l.cache = None,
            Self::BatchNorm(l) => l.cache = None,
            Self::Dropout(l) => l.cache = None,
            Self::Linear(l) => l.cache = None,
            Self::Relu(c) => *c = None,
            Self::Flatten(_, c) => *c = None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        // keep values away from zero so relu kinks are not straddled by the probe
        let data = (0..n)
            .map(|_| {
                let v: f64 = rng.random_range(0.05..1.5);
                if rng.random::<bool>() { v } else { -v }
            })
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    /// Loss `sum(r * layer(x))` in train mode with a fixed dropout stream.
    fn probe_loss(layer: &Layer<f64>, x: &Tensor<f64>, r: &[f64]) -> f64 {
        let mut l = layer.clone();
        let y = l.forward(x, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        y.data().iter().zip(r).map(|(a, b)| a * b).sum()
    }

    fn close(analytic: f64, numeric: f64) -> bool {
        let diff = (analytic - numeric).abs();
        diff < 1e-6 || diff / analytic.abs().max(numeric.abs()) < 1e-4
    }

    fn grad_check(spec: LayerSpec, input: Vec<usize>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = Layer::<f64>::build(&spec, &input[1..], InitScheme::Standard, &mut rng);
        let x = random_tensor(input, &mut rng);
        let y = layer.forward(&x, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = layer.backward(&Tensor::new(y.shape().to_vec(), r.clone()).unwrap()).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let num = (probe_loss(&layer, &xp, &r) - probe_loss(&layer, &xm, &r)) / (2.0 * h);
            assert!(close(dx.data()[i], num), "{spec:?} input {i}: {} vs {num}", dx.data()[i]);
        }
        let grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut lp = layer.clone();
                lp.params_mut()[pi].value[j] += h;
                let mut lm = layer.clone();
                lm.params_mut()[pi].value[j] -= h;
                let num = (probe_loss(&lp, &x, &r) - probe_loss(&lm, &x, &r)) / (2.0 * h);
                assert!(close(g[j], num), "{spec:?} param {pi}[{j}]: {} vs {num}", g[j]);
            }
        }
    }

    #[test]
    fn conv_gradients() {
        grad_check(LayerSpec::conv(4, 1), vec![3, 2, 9], 1);
        grad_check(LayerSpec::conv(3, 2), vec![2, 3, 10], 2);
        grad_check(LayerSpec::Conv1d { out_channels: 2, kernel: 4, stride: 3, padding: 0 }, vec![2, 2, 11], 3);
    }

    #[test]
    fn pool_gradients() {
        grad_check(LayerSpec::pool(3, 2), vec![2, 3, 12], 4);
        grad_check(LayerSpec::pool(2, 2), vec![3, 2, 9], 5);
    }

    #[test]
    fn batch_norm_gradients() {
        grad_check(LayerSpec::batch_norm(), vec![4, 3, 5], 6);
        grad_check(LayerSpec::batch_norm(), vec![5, 7], 7);
    }

    #[test]
    fn dropout_linear_relu_flatten_gradients() {
        grad_check(LayerSpec::dropout(0.4), vec![3, 10], 8);
        grad_check(LayerSpec::linear(5), vec![4, 7], 9);
        grad_check(LayerSpec::Relu, vec![3, 2, 6], 10);
        grad_check(LayerSpec::Flatten, vec![2, 3, 4], 11);
    }

    #[test]
    fn linear_gradient_closed_form() {
        // quadratic loss |Wx - y|² with zero bias: dW = 2 (Wx - y) xᵀ
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut l = Linear::<f64>::new(4, 3, InitScheme::Standard, &mut rng);
        l.bias.value = vec![0.0; 3];
        let x = [0.5, -1.0, 2.0, 0.25];
        let target = [1.0, 0.0, -2.0];
        let mut layer = Layer::Linear(l.clone());
        let y = layer.forward(&Tensor::new(vec![1, 4], x.to_vec()).unwrap(), &mut rng).unwrap();
        let resid: Vec<f64> = y.data().iter().zip(&target).map(|(a, b)| a - b).collect();
        let dy = Tensor::new(vec![1, 3], resid.iter().map(|r| 2.0 * r).collect()).unwrap();
        layer.backward(&dy).unwrap();
        let Layer::Linear(trained) = layer else { unreachable!() };
        for o in 0..3 {
            let wx: f64 = (0..4).map(|i| l.weight.value[o * 4 + i] * x[i]).sum();
            for i in 0..4 {
                let expected = 2.0 * (wx - target[o]) * x[i];
                assert!((trained.weight.grad[o * 4 + i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_needs_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut l = Layer::<f64>::build(&LayerSpec::linear(2), &[3], InitScheme::Standard, &mut rng);
        assert!(matches!(l.backward(&Tensor::zeros(vec![1, 2])), Err(Error::State(_))));
        let mut bn = Layer::<f64>::build(&LayerSpec::batch_norm(), &[3], InitScheme::Standard, &mut rng);
        assert!(matches!(bn.forward(&Tensor::zeros(vec![1, 3]), &mut rng), Err(Error::BatchTooSmall(1))));
        assert!(bn.infer(&Tensor::zeros(vec![1, 3])).is_ok());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let mut bn = BatchNorm::<f64>::new(&[1], 0.1, 1e-5);
        let x = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.train_forward(&x).unwrap();
        // mean 2.5, unbiased variance 5/3
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn init_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let std = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let w: Vec<f64> = init_weights(InitScheme::KaimingNormal, 100, 50, 20000, &mut rng);
        assert!((std(&w) - (2.0f64 / 100.0).sqrt()).abs() < 0.005);
        let w: Vec<f64> = init_weights(InitScheme::XavierUniform, 100, 50, 20000, &mut rng);
        assert!(w.iter().all(|x| x.abs() <= (6.0f64 / 150.0).sqrt()));
        assert!((std(&w) - (2.0f64 / 150.0).sqrt()).abs() < 0.005);
        let b: Vec<f64> = init_bias(InitScheme::XavierNormal, 10, 5, &mut rng);
        assert!(b.iter().all(|&x| x == 0.0));
    }
}
