use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MARKER_COUNT;
use crate::optics::{FBGS_PER_PLANE, GRID_LEN, SCANS_PER_SAMPLE};

pub const INPUT_CHANNELS: usize = SCANS_PER_SAMPLE;
pub const INPUT_LEN: usize = GRID_LEN;
pub const OUTPUT_SIZE: usize = MARKER_COUNT * 3;

const _: () = assert!(FBGS_PER_PLANE == 3);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv1d { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    MaxPool1d { kernel: usize, stride: usize },
    BatchNorm { momentum: f64, eps: f64 },
    Dropout { p: f64 },
    Linear { units: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    /// Kernel-3 convolution with length-preserving padding.
    pub fn conv(out_channels: usize, stride: usize) -> Self {
        Self::Conv1d { out_channels, kernel: 3, stride, padding: 1 }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        Self::MaxPool1d { kernel, stride }
    }

    pub fn batch_norm() -> Self {
        Self::BatchNorm { momentum: 0.1, eps: 1e-5 }
    }

    pub fn dropout(p: f64) -> Self {
        Self::Dropout { p }
    }

    pub fn linear(units: usize) -> Self {
        Self::Linear { units }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let cfg = |m: String| Err(Error::Config(m));
        match (*self, input) {
            (Self::Conv1d { out_channels, kernel, stride, padding }, &[_, len]) => {
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return cfg("convolution needs positive channels, kernel and stride".into());
                }
                if len + 2 * padding < kernel {
                    return cfg(format!("convolution kernel {kernel} exceeds padded length {}", len + 2 * padding));
                }
                Ok(vec![out_channels, (len + 2 * padding - kernel) / stride + 1])
            }
            (Self::MaxPool1d { kernel, stride }, &[c, len]) => {
                if kernel == 0 || stride == 0 {
                    return cfg("pooling needs positive kernel and stride".into());
                }
                if len < kernel {
                    return cfg(format!("pooling kernel {kernel} exceeds length {len}"));
                }
                Ok(vec![c, (len - kernel) / stride + 1])
            }
            (Self::BatchNorm { momentum, eps }, s) if !s.is_empty() && s.len() <= 2 => {
                if !(0.0..=1.0).contains(&momentum) || !(eps > 0.0) {
                    return cfg("batch norm needs momentum in [0, 1] and eps > 0".into());
                }
                Ok(s.to_vec())
            }
            (Self::Dropout { p }, s) => {
                if !(0.0..1.0).contains(&p) {
                    return cfg(format!("dropout probability {p} outside [0, 1)"));
                }
                Ok(s.to_vec())
            }
            (Self::Linear { units }, &[_]) => {
                if units == 0 {
                    return cfg("linear layer needs at least one unit".into());
                }
                Ok(vec![units])
            }
            (Self::Relu, s) => Ok(s.to_vec()),
            (Self::Flatten, s) => Ok(vec![s.iter().product()]),
            (spec, s) => cfg(format!("{spec:?} cannot take input of shape {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(±1/sqrt(fan_in))` for weights and biases.
    Standard,
    XavierUniform,
    XavierNormal,
    KaimingUniform,
    KaimingNormal,
}

impl InitScheme {
    pub const ALL: [InitScheme; 5] =
        [Self::Standard, Self::XavierUniform, Self::XavierNormal, Self::KaimingUniform, Self::KaimingNormal];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    pub init: InitScheme,
    pub input_channels: usize,
    pub input_len: usize,
    pub output_size: usize,
}

impl ModelConfig {
    pub fn new(layers: Vec<LayerSpec>, init: InitScheme) -> Self {
        Self { layers, init, input_channels: INPUT_CHANNELS, input_len: INPUT_LEN, output_size: OUTPUT_SIZE }
    }

    /// Per-sample shape after every layer, starting with the input shape.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_channels == 0 || self.input_len == 0 {
            return Err(Error::Config("empty input shape".into()));
        }
        let mut trace = vec![vec![self.input_channels, self.input_len]];
        for l in &self.layers {
            let next = l.output_shape(trace.last().unwrap())?;
            trace.push(next);
        }
        Ok(trace)
    }

    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        let trace = self.shape_trace()?;
        match self.layers.last() {
            Some(LayerSpec::Linear { units }) if *units == self.output_size => Ok(trace),
            _ => Err(Error::Config(format!("model must end in a linear layer of {} units", self.output_size))),
        }
    }

    /// Input width of the first linear layer.
    pub fn flatten_width(&self) -> Result<Option<usize>> {
        let trace = self.shape_trace()?;
        Ok(self.layers.iter().position(|l| matches!(l, LayerSpec::Linear { .. })).map(|i| trace[i].iter().product()))
    }

    pub fn conv_channels(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv1d { out_channels, .. } => Some(*out_channels),
                _ => None,
            })
            .collect()
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dropout { p } => Some(*p),
                _ => None,
            })
            .collect()
    }
}

/// The published stack with `fc_width` units in the five hidden linear layers.
pub fn architecture_with_width(fc_width: usize) -> ModelConfig {
    use LayerSpec as L;
    let layers = vec![
        L::batch_norm(),
        L::conv(16, 1),
        L::Relu,
        L::pool(3, 2),
        L::conv(16, 1),
        L::Relu,
        L::pool(2, 2),
        L::conv(32, 1),
        L::Relu,
        L::pool(3, 2),
        L::conv(32, 2),
        L::Relu,
        L::pool(3, 3),
        L::conv(256, 1),
        L::Relu,
        L::batch_norm(),
        L::pool(2, 2),
        L::Flatten,
        L::linear(fc_width),
        L::Relu,
        L::batch_norm(),
        L::dropout(0.37),
        L::linear(fc_width),
        L::Relu,
        L::linear(fc_width),
        L::Relu,
        L::batch_norm(),
        L::linear(fc_width),
        L::Relu,
        L::dropout(0.16),
        L::linear(fc_width),
        L::Relu,
        L::linear(OUTPUT_SIZE),
    ];
    ModelConfig::new(layers, InitScheme::XavierNormal)
}

pub fn full_architecture() -> ModelConfig {
    architecture_with_width(2000)
}

/// Same topology with 256-unit hidden linear layers.
pub fn scaled_architecture() -> ModelConfig {
    architecture_with_width(256)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub smooth_l1_beta: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Batches used after every epoch to re-estimate batch-norm running
    /// statistics with dropout off; 0 keeps the momentum estimates.
    pub bn_recalibration_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 256, learning_rate: 1e-4, smooth_l1_beta: 4.04, l2: 0.0, epochs: 30, seed: 0, bn_recalibration_batches: 30 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.smooth_l1_beta >= 0.0) || !self.smooth_l1_beta.is_finite() {
            return Err(Error::Config("smooth_l1_beta must be non-negative".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::Config("learning_rate must be positive and l2 non-negative".into()));
        }
        Ok(())
    }
}
