use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array3, Array4, ArrayD, Axis, Ix2, Ix3, Ix4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::lstm::{BiLstmCache, LstmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

/// How the two directions of a bidirectional layer are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    #[default]
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn default_momentum() -> f64 {
    0.99
}

fn default_epsilon() -> f64 {
    1e-3
}

/// Per-sample shapes exclude the batch axis: dense layers see `[features]`,
/// convolutions `[channels, height, width]`, recurrent layers `[timesteps, features]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default)]
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    BatchNorm {
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Conv2d {
        feature_maps: usize,
        kernel: [usize; 2],
        #[serde(default)]
        activation: Activation,
    },
    MaxPool2d {
        pool: [usize; 2],
    },
    BiLstm {
        units: usize,
        return_sequences: bool,
        #[serde(default)]
        merge: Merge,
    },
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn batch_norm() -> Self {
        LayerSpec::BatchNorm {
            momentum: default_momentum(),
            epsilon: default_epsilon(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::BiLstm { .. } => "bilstm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        let flat = |what: &str| -> Result<usize, String> {
            match input {
                [f] if *f > 0 => Ok(*f),
                _ => Err(format!("{what} expects a flat input, got {input:?}")),
            }
        };
        match *self {
            LayerSpec::Dense { units, .. } => {
                flat("dense")?;
                positive("units", units)?;
                Ok(vec![units])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate must lie in [0, 1), got {rate}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::BatchNorm { momentum, epsilon } => {
                flat("batchnorm")?;
                if !(0.0..1.0).contains(&momentum) || !(epsilon > 0.0) {
                    return Err(format!(
                        "momentum must lie in [0, 1) and epsilon be positive, got {momentum}, {epsilon}"
                    ));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Conv2d {
                feature_maps,
                kernel: [kh, kw],
                ..
            } => {
                positive("feature maps", feature_maps)?;
                positive("kernel height", kh)?;
                positive("kernel width", kw)?;
                match input {
                    [c, h, w] if *c > 0 && *h >= kh && *w >= kw => {
                        Ok(vec![feature_maps, h - kh + 1, w - kw + 1])
                    }
                    _ => Err(format!(
                        "conv2d with a {kh}x{kw} kernel cannot take input {input:?}"
                    )),
                }
            }
            LayerSpec::MaxPool2d { pool: [ph, pw] } => {
                positive("pool height", ph)?;
                positive("pool width", pw)?;
                match input {
                    [c, h, w] if *c > 0 && *h >= ph && *w >= pw => Ok(vec![*c, h / ph, w / pw]),
                    _ => Err(format!(
                        "maxpool2d with a {ph}x{pw} window cannot take input {input:?}"
                    )),
                }
            }
            LayerSpec::BiLstm {
                units,
                return_sequences,
                ..
            } => {
                positive("units", units)?;
                match input {
                    [t, f] if *t > 0 && *f > 0 => Ok(if return_sequences {
                        vec![*t, 2 * units]
                    } else {
                        vec![2 * units]
                    }),
                    _ => Err(format!("bilstm expects [timesteps, features], got {input:?}")),
                }
            }
            LayerSpec::Flatten => {
                if input.is_empty() || input.contains(&0) {
                    return Err(format!("cannot flatten {input:?}"));
                }
                Ok(vec![input.iter().product()])
            }
            LayerSpec::Softmax => {
                flat("softmax")?;
                Ok(input.to_vec())
            }
        }
    }
}

fn positive(name: &str, value: usize) -> Result<(), String> {
    if value == 0 {
        Err(format!("{name} must be positive"))
    } else {
        Ok(())
    }
}

/// A layer with its learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        /// `in x out`.
        weights: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
    BatchNorm {
        gamma: Array1<f64>,
        beta: Array1<f64>,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
        momentum: f64,
        epsilon: f64,
    },
    Conv2d {
        /// `maps x (channels * kh * kw)`.
        kernel: Array2<f64>,
        bias: Array1<f64>,
        kernel_size: [usize; 2],
        activation: Activation,
    },
    MaxPool2d {
        pool: [usize; 2],
    },
    BiLstm {
        forward: LstmParams,
        backward: LstmParams,
        return_sequences: bool,
    },
    Flatten,
    Softmax,
}

pub(crate) enum Cache {
    Dense { x: Array2<f64>, out: Array2<f64> },
    Dropout { mask: Option<ArrayD<f64>> },
    BatchNorm(Option<BatchStats>),
    Conv { cols: Vec<Array2<f64>>, out: Array4<f64>, in_shape: [usize; 4] },
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    BiLstm(Box<BiLstmCache>),
    Flatten { in_shape: Vec<usize> },
    Softmax { logits: Array2<f64>, probs: Array2<f64> },
}

pub(crate) struct BatchStats {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pub(crate) mean: Array1<f64>,
    pub(crate) var: Array1<f64>,
}

impl Layer {
    /// Fresh layer for `input` with glorot-initialised kernels and zero biases.
    pub fn init(spec: &LayerSpec, input: &[usize], rng: &mut ChaCha8Rng) -> Self {
        match *spec {
            LayerSpec::Dense { units, activation } => {
                let fan_in = input[0];
                let w = glorot_uniform(fan_in, units, &[fan_in, units], rng);
                Layer::Dense {
                    weights: w.into_dimensionality().expect("2-D"),
                    bias: Array1::zeros(units),
                    activation,
                }
            }
            LayerSpec::Dropout { rate } => Layer::Dropout { rate },
            LayerSpec::BatchNorm { momentum, epsilon } => {
                let f = input[0];
                Layer::BatchNorm {
                    gamma: Array1::ones(f),
                    beta: Array1::zeros(f),
                    running_mean: Array1::zeros(f),
                    running_var: Array1::ones(f),
                    momentum,
                    epsilon,
                }
            }
            LayerSpec::Conv2d {
                feature_maps,
                kernel: [kh, kw],
                activation,
            } => {
                let c = input[0];
                let w = glorot_uniform(
                    c * kh * kw,
                    feature_maps * kh * kw,
                    &[feature_maps, c * kh * kw],
                    rng,
                );
                Layer::Conv2d {
                    kernel: w.into_dimensionality().expect("2-D"),
                    bias: Array1::zeros(feature_maps),
                    kernel_size: [kh, kw],
                    activation,
                }
            }
            LayerSpec::MaxPool2d { pool } => Layer::MaxPool2d { pool },
            LayerSpec::BiLstm {
                units,
                return_sequences,
                ..
            } => Layer::BiLstm {
                forward: LstmParams::glorot(input[1], units, rng),
                backward: LstmParams::glorot(input[1], units, rng),
                return_sequences,
            },
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Softmax => Layer::Softmax,
        }
    }

    /// Learned parameters in a fixed order, each flagged when it carries
    /// the L2 penalty (kernels and recurrent weights, not biases or scales).
    pub fn params(&self) -> Vec<(&[f64], bool)> {
        match self {
            Layer::Dense { weights, bias, .. } => vec![(slice(weights), true), (slice(bias), false)],
            Layer::BatchNorm { gamma, beta, .. } => vec![(slice(gamma), false), (slice(beta), false)],
            Layer::Conv2d { kernel, bias, .. } => vec![(slice(kernel), true), (slice(bias), false)],
            Layer::BiLstm {
                forward, backward, ..
            } => {
                let mut v = forward.params();
                v.extend(backward.params());
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense { weights, bias, .. } => vec![slice_mut(weights), slice_mut(bias)],
            Layer::BatchNorm { gamma, beta, .. } => vec![slice_mut(gamma), slice_mut(beta)],
            Layer::Conv2d { kernel, bias, .. } => vec![slice_mut(kernel), slice_mut(bias)],
            Layer::BiLstm {
                forward, backward, ..
            } => {
                let mut v = forward.params_mut();
                v.extend(backward.params_mut());
                v
            }
            _ => Vec::new(),
        }
    }

    pub(crate) fn forward(&self, x: ArrayD<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> (ArrayD<f64>, Cache) {
        match self {
            Layer::Dense {
                weights,
                bias,
                activation,
            } => {
                let x = into2(x);
                let mut out = x.dot(weights) + bias;
                activate(&mut out, *activation);
                (out.clone().into_dyn(), Cache::Dense { x, out })
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Infer || *rate == 0.0 {
                    return (x, Cache::Dropout { mask: None });
                }
                let keep = 1.0 / (1.0 - rate);
                let mask = x.mapv(|_| if rng.random::<f64>() < *rate { 0.0 } else { keep });
                let out = &x * &mask;
                (out, Cache::Dropout { mask: Some(mask) })
            }
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                epsilon,
                ..
            } => {
                let x = into2(x);
                match mode {
                    Mode::Infer => {
                        let inv = running_var.mapv(|v| 1.0 / (v + epsilon).sqrt());
                        let out = (&x - running_mean) * &(&inv * gamma) + beta;
                        (out.into_dyn(), Cache::BatchNorm(None))
                    }
                    Mode::Train => {
                        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
                        let centered = &x - &mean;
                        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty batch");
                        let inv_std = var.mapv(|v| 1.0 / (v + epsilon).sqrt());
                        let xhat = centered * &inv_std;
                        let out = &xhat * gamma + beta;
                        (
                            out.into_dyn(),
                            Cache::BatchNorm(Some(BatchStats {
                                xhat,
                                inv_std,
                                mean,
                                var,
                            })),
                        )
                    }
                }
            }
            Layer::Conv2d {
                kernel,
                bias,
                kernel_size,
                activation,
            } => {
                let x: Array4<f64> = x.into_dimensionality::<Ix4>().expect("4-D input");
                let (b, c, h, w) = x.dim();
                let [kh, kw] = *kernel_size;
                let (oh, ow) = (h - kh + 1, w - kw + 1);
                let maps = kernel.nrows();
                let mut out = Array4::<f64>::zeros((b, maps, oh, ow));
                let mut cols = Vec::with_capacity(b);
                for s in 0..b {
                    let col = im2col(&x, s, c, kh, kw, oh, ow);
                    let mut dst = out
                        .index_axis_mut(Axis(0), s)
                        .into_shape_with_order((maps, oh * ow))
                        .expect("contiguous sample");
                    general_mat_mul(1.0, kernel, &col, 0.0, &mut dst);
                    for (mut row, bb) in dst.rows_mut().into_iter().zip(bias.iter()) {
                        row += *bb;
                    }
                    cols.push(col);
                }
                activate(&mut out, *activation);
                (
                    out.clone().into_dyn(),
                    Cache::Conv {
                        cols,
                        out,
                        in_shape: [b, c, h, w],
                    },
                )
            }
            Layer::MaxPool2d { pool: [ph, pw] } => {
                let x: Array4<f64> = x.into_dimensionality::<Ix4>().expect("4-D input");
                let (b, c, h, w) = x.dim();
                let (oh, ow) = (h / ph, w / pw);
                let mut out = Array4::<f64>::zeros((b, c, oh, ow));
                let mut argmax = Vec::with_capacity(b * c * oh * ow);
                let src = x.as_slice().expect("standard layout");
                for s in 0..b {
                    for ch in 0..c {
                        let plane = (s * c + ch) * h * w;
                        for i in 0..oh {
                            for j in 0..ow {
                                let mut best = plane + i * ph * w + j * pw;
                                for di in 0..*ph {
                                    for dj in 0..*pw {
                                        let idx = plane + (i * ph + di) * w + j * pw + dj;
                                        if src[idx] > src[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                out[(s, ch, i, j)] = src[best];
                                argmax.push(best);
                            }
                        }
                    }
                }
                (
                    out.into_dyn(),
                    Cache::Pool {
                        argmax,
                        in_shape: vec![b, c, h, w],
                    },
                )
            }
            Layer::BiLstm {
                forward,
                backward,
                return_sequences,
            } => {
                let x: Array3<f64> = x.into_dimensionality::<Ix3>().expect("3-D input");
                let (out, cache) = super::lstm::bilstm_forward(forward, backward, x, *return_sequences);
                (out, Cache::BiLstm(Box::new(cache)))
            }
            Layer::Flatten => {
                let in_shape = x.shape().to_vec();
                let b = in_shape[0];
                let rest: usize = in_shape[1..].iter().product();
                let out = x
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(vec![b, rest])
                    .expect("contiguous");
                (out, Cache::Flatten { in_shape })
            }
            Layer::Softmax => {
                let logits = into2(x);
                let probs = softmax_rows(&logits);
                (probs.clone().into_dyn(), Cache::Softmax { logits, probs })
            }
        }
    }

    /// Gradient with respect to the layer input plus one gradient buffer per
    /// entry of [`Layer::params`].
    pub(crate) fn backward(&self, cache: &Cache, grad: ArrayD<f64>) -> (ArrayD<f64>, Vec<Vec<f64>>) {
        match (self, cache) {
            (
                Layer::Dense {
                    weights,
                    activation,
                    ..
                },
                Cache::Dense { x, out },
            ) => {
                let mut g = into2(grad);
                deactivate(&mut g, out, *activation);
                let dw = x.t().dot(&g);
                let db = g.sum_axis(Axis(0));
                let dx = g.dot(&weights.t());
                (dx.into_dyn(), vec![dw.into_raw_vec_and_offset().0, db.to_vec()])
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(m) => (grad * m, Vec::new()),
                None => (grad, Vec::new()),
            },
            (Layer::BatchNorm { gamma, .. }, Cache::BatchNorm(stats)) => {
                let g = into2(grad);
                let stats = stats.as_ref().expect("backward requires a train-mode pass");
                let n = g.nrows() as f64;
                let dgamma = (&g * &stats.xhat).sum_axis(Axis(0));
                let dbeta = g.sum_axis(Axis(0));
                let dxhat = &g * gamma;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &stats.xhat).sum_axis(Axis(0));
                let dx = (dxhat * n - &sum_dxhat - &stats.xhat * &sum_dxhat_xhat) * &(&stats.inv_std / n);
                (dx.into_dyn(), vec![dgamma.to_vec(), dbeta.to_vec()])
            }
            (
                Layer::Conv2d {
                    kernel,
                    kernel_size: [kh, kw],
                    activation,
                    ..
                },
                Cache::Conv { cols, out, in_shape },
            ) => {
                let mut g: Array4<f64> = grad.into_dimensionality::<Ix4>().expect("4-D grad");
                deactivate(&mut g, out, *activation);
                let [b, c, h, w] = *in_shape;
                let (_, maps, oh, ow) = g.dim();
                let mut dk = Array2::<f64>::zeros(kernel.dim());
                let mut db = Array1::<f64>::zeros(maps);
                let mut dx = Array4::<f64>::zeros((b, c, h, w));
                let mut dcol = Array2::<f64>::zeros((c * kh * kw, oh * ow));
                for s in 0..b {
                    let gs = g
                        .index_axis(Axis(0), s)
                        .into_shape_with_order((maps, oh * ow))
                        .expect("contiguous sample");
                    general_mat_mul(1.0, &gs, &cols[s].t(), 1.0, &mut dk);
                    db += &gs.sum_axis(Axis(1));
                    general_mat_mul(1.0, &kernel.t(), &gs, 0.0, &mut dcol);
                    col2im(&dcol, &mut dx, s, c, *kh, *kw, oh, ow);
                }
                (
                    dx.into_dyn(),
                    vec![dk.into_raw_vec_and_offset().0, db.to_vec()],
                )
            }
            (Layer::MaxPool2d { .. }, Cache::Pool { argmax, in_shape }) => {
                let g = grad.as_standard_layout();
                let g = g.as_slice().expect("standard layout");
                let mut dx = vec![0.0; in_shape.iter().product()];
                for (gi, &src) in g.iter().zip(argmax) {
                    dx[src] += gi;
                }
                (
                    ArrayD::from_shape_vec(in_shape.clone(), dx).expect("shape"),
                    Vec::new(),
                )
            }
            (
                Layer::BiLstm {
                    forward, backward, ..
                },
                Cache::BiLstm(cache),
            ) => super::lstm::bilstm_backward(forward, backward, cache, grad),
            (Layer::Flatten, Cache::Flatten { in_shape }) => (
                grad.as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(in_shape.clone())
                    .expect("shape"),
                Vec::new(),
            ),
            (Layer::Softmax, Cache::Softmax { probs, .. }) => {
                let g = into2(grad);
                let dot = (&g * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
                ((probs * &(g - &dot)).into_dyn(), Vec::new())
            }
            _ => unreachable!("cache does not belong to this layer"),
        }
    }
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

fn into2(x: ArrayD<f64>) -> Array2<f64> {
    x.into_dimensionality::<Ix2>().expect("2-D input")
}

fn activate<D: ndarray::Dimension>(z: &mut ndarray::Array<f64, D>, act: Activation) {
    if act == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
}

fn deactivate<D: ndarray::Dimension>(
    g: &mut ndarray::Array<f64, D>,
    out: &ndarray::Array<f64, D>,
    act: Activation,
) {
    if act == Activation::Relu {
        ndarray::Zip::from(g).and(out).for_each(|g, &o| {
            if o <= 0.0 {
                *g = 0.0;
            }
        });
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// `ln softmax` per row, computed from the logits for stability.
pub(crate) fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn im2col(x: &Array4<f64>, s: usize, c: usize, kh: usize, kw: usize, oh: usize, ow: usize) -> Array2<f64> {
    let mut col = Array2::<f64>::zeros((c * kh * kw, oh * ow));
    let sample = x.index_axis(Axis(0), s);
    for ch in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let r = (ch * kh + i) * kw + j;
                let mut dst = col.row_mut(r);
                let dst = dst.as_slice_mut().expect("row contiguous");
                for y in 0..oh {
                    for xx in 0..ow {
                        dst[y * ow + xx] = sample[(ch, y + i, xx + j)];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcol: &Array2<f64>,
    dx: &mut Array4<f64>,
    s: usize,
    c: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
) {
    let mut sample = dx.index_axis_mut(Axis(0), s);
    for ch in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let r = (ch * kh + i) * kw + j;
                let src = dcol.row(r);
                for y in 0..oh {
                    for xx in 0..ow {
                        sample[(ch, y + i, xx + j)] += src[y * ow + xx];
                    }
                }
            }
        }
    }
}
