//! A small CPU network stack: 1D convolution, max pooling, batch
//! normalization, dropout, fully connected layers, SmoothL1 loss and Adam.

mod config;
mod layers;
mod network;
mod optim;
mod tensor;
mod train;

pub use config::{
    architecture_with_width, full_architecture, scaled_architecture, InitScheme, LayerSpec, ModelConfig, TrainConfig,
    INPUT_CHANNELS, INPUT_LEN, OUTPUT_SIZE,
};
pub use layers::{BatchNorm, Conv1d, Dropout, Layer, Linear, MaxPool1d};
pub use network::{Network, NetworkState, Snapshot};
pub use optim::{smooth_l1, smooth_l1_value, Adam, AdamState};
pub use tensor::{Param, Real, Tensor};
pub use train::{evaluate, predict, predict_outputs, train, EpochStats, Examples, TrainHistory, Trainer};
