use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LayerSpec, ModelConfig};
use super::layers::Layer;
use super::tensor::{Param, Real, Tensor};
use crate::error::{invalid, Error, Result};

/// A sequential network. Eval-mode [`Network::infer`] takes `&self` and may
/// run concurrently; training goes through `&mut self`.
#[derive(Clone, Debug)]
pub struct Network<T> {
    config: ModelConfig,
    trace: Vec<Vec<usize>>,
    layers: Vec<Layer<T>>,
    rng: ChaCha8Rng,
    pending_backward: bool,
}

/// Parameters and running statistics in 64-bit form, in layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkState {
    pub config: ModelConfig,
    pub params: Vec<Vec<f64>>,
    pub buffers: Vec<Vec<f64>>,
}

/// In-memory copy of parameters and buffers, for best-epoch retention.
#[derive(Clone, Debug)]
pub struct Snapshot<T> {
    params: Vec<Vec<T>>,
    buffers: Vec<Vec<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let trace = config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config.layers.iter().zip(&trace).map(|(s, shape)| Layer::build(s, shape, config.init, &mut rng)).collect();
        if let Some(w) = config.flatten_width()? {
            log::debug!("first linear layer takes {w} inputs");
        }
        Ok(Self { config: config.clone(), trace, layers, rng, pending_backward: false })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Per-sample shapes from the input through every layer.
    pub fn shape_trace(&self) -> &[Vec<usize>] {
        &self.trace
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Reseeds the dropout stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = &self.trace[0];
        if x.shape().len() != 3 || &x.shape()[1..] != want.as_slice() || x.batch() == 0 {
            return Err(invalid(format!("network expects [B, {}, {}], got {:?}", want[0], want[1], x.shape())));
        }
        if !x.is_finite() {
            return Err(invalid("network input has non-finite values"));
        }
        Ok(())
    }

    /// Eval-mode forward: running statistics, no dropout, no caching.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h)?;
        }
        Ok(h)
    }

    /// Train-mode forward: batch statistics, dropout, intermediates kept for backward.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.pending_backward = false;
        self.layers.iter_mut().for_each(Layer::clear_cache);
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h, &mut self.rng)?;
        }
        self.pending_backward = true;
        Ok(h)
    }

    /// Replaces every batch norm's running statistics by the average of its
    /// batch statistics over `batches`, computed with dropout off.
    pub fn recalibrate_batch_norm<'a>(&mut self, batches: impl IntoIterator<Item = &'a Tensor<T>>) -> Result<()> {
        self.pending_backward = false;
        self.layers.iter_mut().for_each(Layer::clear_cache);
        for (k, x) in batches.into_iter().enumerate() {
            self.check_input(x)?;
            let mut h = x.clone();
            for l in &mut self.layers {
                h = l.calibrate(&h, k)?;
            }
        }
        self.layers.iter_mut().for_each(Layer::clear_cache);
        Ok(())
    }

    /// Accumulates parameter gradients for `dy = dLoss/dOutput` and returns dLoss/dInput.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        if !self.pending_backward {
            return Err(Error::State("backward called without a train-mode forward".into()));
        }
        self.pending_backward = false;
        let mut g = dy.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn snapshot(&self) -> Snapshot<T> {
        Snapshot {
            params: self.params().iter().map(|p| p.value.clone()).collect(),
            buffers: self.layers.iter().flat_map(Layer::buffers).cloned().collect(),
        }
    }

    pub fn restore(&mut self, s: &Snapshot<T>) {
        for (p, v) in self.params_mut().into_iter().zip(&s.params) {
            p.value.copy_from_slice(v);
        }
        for (b, v) in self.layers.iter_mut().flat_map(Layer::buffers_mut).zip(&s.buffers) {
            b.copy_from_slice(v);
        }
    }

    pub fn state(&self) -> NetworkState {
        let s = self.snapshot();
        let wide = |v: &Vec<Vec<T>>| v.iter().map(|b| b.iter().map(|x| x.as_f64()).collect()).collect();
        NetworkState { config: self.config.clone(), params: wide(&s.params), buffers: wide(&s.buffers) }
    }

    pub fn from_state(state: &NetworkState) -> Result<Self> {
        let mut net = Self::new(&state.config, 0)?;
        let s = net.snapshot();
        let sizes_match = |a: &[Vec<T>], b: &[Vec<f64>]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len());
        if !sizes_match(&s.params, &state.params) || !sizes_match(&s.buffers, &state.buffers) {
            return Err(Error::Format("parameter buffers do not match the model config".into()));
        }
        let narrow = |v: &[Vec<f64>]| v.iter().map(|b| b.iter().map(|&x| T::lit(x)).collect()).collect();
        net.restore(&Snapshot { params: narrow(&state.params), buffers: narrow(&state.buffers) });
        Ok(net)
    }

    /// Whether any layer is a batch norm (train mode then needs two samples per batch).
    pub fn has_batch_norm(&self) -> bool {
        self.config.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. }))
    }
}
