use ndarray::{Array2, ArrayD, ArrayView2, Axis, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{log_softmax_rows, Cache, Layer, LayerSpec, Mode};
use super::optim::OptimizerState;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample shape, without the batch axis.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl NetworkSpec {
    /// Shape after every layer, starting with the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Layer {
                index: 0,
                kind: "input",
                reason: format!("invalid input shape {:?}", self.input_shape),
            });
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!(
                "l2_lambda must be non-negative, got {}",
                self.l2_lambda
            )));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (index, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().expect("nonempty"))
                .map_err(|reason| Error::Layer {
                    index,
                    kind: layer.kind(),
                    reason,
                })?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("nonempty"))
    }
}

/// Loss, accuracy, and parameter gradients of one batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Cross-entropy plus the L2 penalty.
    pub loss: f64,
    pub accuracy: f64,
    /// Per layer, per parameter, flattened like [`Layer::params`].
    pub grads: Vec<Vec<Vec<f64>>>,
    batch_stats: Vec<Option<(ndarray::Array1<f64>, ndarray::Array1<f64>)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    pub fn build(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| Layer::init(l, s, &mut rng))
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(p, _)| p.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let shape = x.shape();
        if shape.is_empty() || shape[0] == 0 || shape[1..] != self.spec.input_shape[..] {
            return Err(Error::Layer {
                index: 0,
                kind: "input",
                reason: format!(
                    "expected a nonempty batch of {:?}, got {:?}",
                    self.spec.input_shape, shape
                ),
            });
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(ArrayD<f64>, Vec<Cache>)> {
        self.check_input(x)?;
        let mut a = x.array().clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(a, mode, rng);
            a = next;
            caches.push(cache);
        }
        Ok((a, caches))
    }

    /// Output for a batch. Dropout draws its masks from `rng` in train mode.
    pub fn forward(&self, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        Ok(Tensor::from_array(self.run(x, mode, rng)?.0))
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(0))
    }

    pub fn l2_penalty(&self) -> f64 {
        if self.spec.l2_lambda == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .layers
            .iter()
            .flat_map(|l| l.params())
            .filter(|(_, reg)| *reg)
            .map(|(p, _)| p.iter().map(|v| v * v).sum::<f64>())
            .sum();
        self.spec.l2_lambda * sum
    }

    /// Adds the gradient of [`Network::l2_penalty`] to `grads`.
    pub fn add_l2_gradient(&self, grads: &mut [Vec<Vec<f64>>]) {
        let lambda = self.spec.l2_lambda;
        if lambda == 0.0 {
            return;
        }
        for (layer, lg) in self.layers.iter().zip(grads.iter_mut()) {
            for ((p, reg), g) in layer.params().into_iter().zip(lg.iter_mut()) {
                if reg {
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi += 2.0 * lambda * pi;
                    }
                }
            }
        }
    }

    /// Mean categorical cross-entropy against `targets` plus the L2 penalty.
    pub fn loss(&self, x: &Tensor, targets: ArrayView2<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<f64> {
        let (_, caches) = self.run(x, mode, rng)?;
        let logits = self.logits(&caches)?;
        check_targets(logits, targets)?;
        Ok(cross_entropy(logits, targets) + self.l2_penalty())
    }

    fn logits<'a>(&self, caches: &'a [Cache]) -> Result<&'a Array2<f64>> {
        match caches.last() {
            Some(Cache::Softmax { logits, .. }) => Ok(logits),
            _ => Err(Error::InvalidArgument(
                "cross-entropy training needs a network ending in softmax".into(),
            )),
        }
    }

    /// Train-mode forward and backward pass over one batch.
    pub fn gradients(&self, x: &Tensor, targets: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<Gradients> {
        let (_, caches) = self.run(x, Mode::Train, rng)?;
        let (logits, probs) = match caches.last() {
            Some(Cache::Softmax { logits, probs }) => (logits, probs),
            _ => {
                return Err(Error::InvalidArgument(
                    "cross-entropy training needs a network ending in softmax".into(),
                ))
            }
        };
        check_targets(logits, targets)?;
        let n = logits.nrows() as f64;
        let loss = cross_entropy(logits, targets) + self.l2_penalty();
        let accuracy = accuracy(probs.view(), targets);

        let last = self.layers.len() - 1;
        let mut grad: ArrayD<f64> = ((probs - &targets) / n).into_dyn();
        let mut grads = vec![Vec::new(); self.layers.len()];
        for index in (0..last).rev() {
            let (g, pg) = self.layers[index].backward(&caches[index], grad);
            grad = g;
            grads[index] = pg;
        }
        self.add_l2_gradient(&mut grads);
        let batch_stats = caches
            .iter()
            .map(|c| match c {
                Cache::BatchNorm(Some(s)) => Some((s.mean.clone(), s.var.clone())),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            loss,
            accuracy,
            grads,
            batch_stats,
        })
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates of every batch-normalisation layer.
    fn update_running_stats(&mut self, stats: &[Option<(ndarray::Array1<f64>, ndarray::Array1<f64>)>]) {
        for (layer, st) in self.layers.iter_mut().zip(stats) {
            if let (
                Layer::BatchNorm {
                    running_mean,
                    running_var,
                    momentum,
                    ..
                },
                Some((mean, var)),
            ) = (layer, st)
            {
                let m = *momentum;
                running_mean.zip_mut_with(mean, |r, b| *r = m * *r + (1.0 - m) * b);
                running_var.zip_mut_with(var, |r, b| *r = m * *r + (1.0 - m) * b);
            }
        }
    }

    /// One optimiser step on a batch with one-hot `targets`.
    pub fn backward_and_step(
        &mut self,
        x: &Tensor,
        targets: ArrayView2<f64>,
        optimizer: &mut OptimizerState,
        learning_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepStats> {
        let g = self.gradients(x, targets, rng)?;
        if !g.loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {}", g.loss)));
        }
        self.apply(&g.grads, optimizer, learning_rate);
        self.update_running_stats(&g.batch_stats);
        Ok(StepStats {
            loss: g.loss,
            accuracy: g.accuracy,
        })
    }

    /// Applies precomputed gradients without touching running statistics.
    pub fn apply(&mut self, grads: &[Vec<Vec<f64>>], optimizer: &mut OptimizerState, learning_rate: f64) {
        let params: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(|l| l.params_mut()).collect();
        let flat: Vec<&[f64]> = grads.iter().flatten().map(|g| g.as_slice()).collect();
        optimizer.step(params, &flat, learning_rate);
    }
}

fn check_targets(logits: &Array2<f64>, targets: ArrayView2<f64>) -> Result<()> {
    if logits.dim() != targets.dim() {
        return Err(Error::InvalidArgument(format!(
            "targets have shape {:?}, network output {:?}",
            targets.dim(),
            logits.dim()
        )));
    }
    Ok(())
}

fn cross_entropy(logits: &Array2<f64>, targets: ArrayView2<f64>) -> f64 {
    let logp = log_softmax_rows(logits);
    -(&logp * &targets).sum() / logits.nrows() as f64
}

/// Fraction of rows whose arg-max matches the target's arg-max.
pub fn accuracy(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    let hits = probs
        .outer_iter()
        .zip(targets.outer_iter())
        .filter(|(p, t)| argmax(p.iter()) == argmax(t.iter()))
        .count();
    hits as f64 / probs.nrows().max(1) as f64
}

pub(crate) fn argmax<'a>(values: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), n_classes));
    for (r, &l) in labels.iter().enumerate() {
        t[(r, l)] = 1.0;
    }
    t
}

/// Predicted class per row of a probability batch.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let p = probs
        .array()
        .view()
        .into_dimensionality::<Ix2>()
        .expect("2-D probabilities");
    p.axis_iter(Axis(0)).map(|r| argmax(r.iter())).collect()
}
