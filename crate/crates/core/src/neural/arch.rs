use serde::{Deserialize, Serialize};

use super::layers::{Activation, LayerSpec, Merge};
use super::network::NetworkSpec;
use crate::error::Result;

pub const DEFAULT_DROPOUT: f64 = 0.1;

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        activation: Activation::Relu,
    }
}

fn head(class_count: usize) -> [LayerSpec; 2] {
    [
        LayerSpec::Dense {
            units: class_count,
            activation: Activation::Linear,
        },
        LayerSpec::Softmax,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpShape {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for MlpShape {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            dropout: DEFAULT_DROPOUT,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnShape {
    pub feature_maps: [usize; 2],
    pub kernel: [usize; 2],
    pub pool: [usize; 2],
    pub dense: [usize; 2],
    pub dropout: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for CnnShape {
    fn default() -> Self {
        Self {
            feature_maps: [16, 8],
            kernel: [3, 3],
            pool: [2, 2],
            dense: [128, 64],
            dropout: DEFAULT_DROPOUT,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmShape {
    pub units: [usize; 2],
    pub dense: [usize; 2],
    pub dropout: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for LstmShape {
    fn default() -> Self {
        Self {
            units: [8, 256],
            dense: [700, 500],
            dropout: DEFAULT_DROPOUT,
            l2_lambda: 0.0,
            seed: 0,
        }
    }
}

pub fn build_mlp(input_dim: usize, class_count: usize) -> Result<NetworkSpec> {
    build_mlp_with(input_dim, class_count, &MlpShape::default())
}

pub fn build_mlp_with(input_dim: usize, class_count: usize, shape: &MlpShape) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    for &w in &shape.hidden {
        layers.push(dense(w));
        layers.push(LayerSpec::Dropout { rate: shape.dropout });
        layers.push(LayerSpec::batch_norm());
    }
    layers.extend(head(class_count));
    finish(vec![input_dim], layers, shape.l2_lambda, shape.seed)
}

/// The input is one plot as a single-channel `rows x cols` image.
pub fn build_cnn(rows: usize, cols: usize, class_count: usize) -> Result<NetworkSpec> {
    build_cnn_with(rows, cols, class_count, &CnnShape::default())
}

pub fn build_cnn_with(rows: usize, cols: usize, class_count: usize, shape: &CnnShape) -> Result<NetworkSpec> {
    let mut layers = Vec::new();
    for &maps in &shape.feature_maps {
        layers.push(LayerSpec::Conv2d {
            feature_maps: maps,
            kernel: shape.kernel,
            activation: Activation::Relu,
        });
        layers.push(LayerSpec::MaxPool2d { pool: shape.pool });
        layers.push(LayerSpec::Dropout { rate: shape.dropout });
    }
    layers.push(LayerSpec::Flatten);
    layers.extend(shape.dense.iter().map(|&w| dense(w)));
    layers.extend(head(class_count));
    finish(vec![1, rows, cols], layers, shape.l2_lambda, shape.seed)
}

pub fn build_lstm(timesteps: usize, features: usize, class_count: usize) -> Result<NetworkSpec> {
    build_lstm_with(timesteps, features, class_count, &LstmShape::default())
}

pub fn build_lstm_with(
    timesteps: usize,
    features: usize,
    class_count: usize,
    shape: &LstmShape,
) -> Result<NetworkSpec> {
    let layers = vec![
        LayerSpec::BiLstm {
            units: shape.units[0],
            return_sequences: true,
            merge: Merge::Concat,
        },
        LayerSpec::BiLstm {
            units: shape.units[1],
            return_sequences: false,
            merge: Merge::Concat,
        },
        dense(shape.dense[0]),
        LayerSpec::Dropout { rate: shape.dropout },
        dense(shape.dense[1]),
        LayerSpec::Dropout { rate: shape.dropout },
    ]
    .into_iter()
    .chain(head(class_count))
    .collect();
    finish(vec![timesteps, features], layers, shape.l2_lambda, shape.seed)
}

fn finish(input_shape: Vec<usize>, layers: Vec<LayerSpec>, l2_lambda: f64, seed: u64) -> Result<NetworkSpec> {
    let spec = NetworkSpec {
        input_shape,
        layers,
        l2_lambda,
        seed,
    };
    spec.shapes()?;
    Ok(spec)
}
