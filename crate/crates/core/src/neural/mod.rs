//! A small dense/convolutional/recurrent network kernel trained by
//! backpropagation, plus builders for the three reference architectures.

mod arch;
mod init;
mod layers;
mod lstm;
mod network;
mod optim;
mod tensor;
mod train;

pub use arch::{
    build_cnn, build_cnn_with, build_lstm, build_lstm_with, build_mlp, build_mlp_with, CnnShape, LstmShape,
    MlpShape, DEFAULT_DROPOUT,
};
pub use init::{glorot_limit, glorot_uniform};
pub use layers::{Activation, Layer, LayerSpec, Merge, Mode};
pub use lstm::{lstm_cell, LstmParams};
pub use network::{accuracy, argmax_rows, one_hot, Gradients, Network, NetworkSpec, StepStats};
pub use optim::{Optimizer, OptimizerState};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainConfig, TrainedModel, TrainingHistory};
