use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{accuracy, argmax_rows, one_hot, Network, NetworkSpec};
use super::optim::{Optimizer, OptimizerState};
use super::tensor::Tensor;
use super::Mode;
use crate::error::{Error, Result};

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share of the training rows held out for the validation curves.
    pub validation_fraction: f64,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: Option<usize>,
    pub restore_best_weights: bool,
    /// Stop as soon as an epoch's training accuracy reaches this.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 150,
            seed: 0,
            validation_fraction: 0.1,
            patience: Some(20),
            restore_best_weights: true,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            );
        }
        out
    }
}

/// A network after training. Inference never mutates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub network: Network,
    pub n_classes: usize,
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.batch_size();
        if n <= PREDICT_CHUNK {
            return self.network.predict(x);
        }
        let mut values = Vec::with_capacity(n * self.n_classes);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..(start + PREDICT_CHUNK).min(n)).collect();
            values.extend_from_slice(self.network.predict(&x.select(&idx))?.values());
        }
        Tensor::new(&[n, self.n_classes], values)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

/// Mini-batch training with per-epoch shuffling drawn from `config.seed`.
pub fn train(
    spec: &NetworkSpec,
    x: &Tensor,
    labels: &[usize],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainingHistory)> {
    config.validate()?;
    let n = x.batch_size();
    if n == 0 || labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }
    let out = spec.output_shape()?;
    if out != [n_classes] {
        return Err(Error::InvalidArgument(format!(
            "network emits {out:?}, expected [{n_classes}]"
        )));
    }

    let mut network = Network::build(spec.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let n_val = if config.validation_fraction > 0.0 && n >= 2 {
        ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    if n_val > 0 {
        order.shuffle(&mut rng);
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val = (!val_idx.is_empty()).then(|| (x.select(val_idx), one_hot(&pick(labels, val_idx), n_classes)));

    let mut optimizer = OptimizerState::new(config.optimizer);
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, Network)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let bx = x.select(batch);
            let by = one_hot(&pick(labels, batch), n_classes);
            let stats = network
                .backward_and_step(&bx, by.view(), &mut optimizer, config.learning_rate, &mut rng)
                .map_err(|e| match e {
                    Error::Numerical(_) => Error::Diverged {
                        epoch,
                        history: history.clone(),
                    },
                    other => other,
                })?;
            loss_sum += stats.loss * batch.len() as f64;
            acc_sum += stats.accuracy * batch.len() as f64;
        }
        let m = train_idx.len() as f64;
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / m,
            train_accuracy: acc_sum / m,
            val_loss: None,
            val_accuracy: None,
        };
        if let Some((vx, vy)) = &val {
            let probs = network.predict(vx)?;
            let p = probs.array().view().into_dimensionality().expect("2-D");
            record.val_loss = Some(network.loss(vx, vy.view(), Mode::Infer, &mut rng)?);
            record.val_accuracy = Some(accuracy(p, vy.view()));
        }
        let monitored = record.val_loss.unwrap_or(record.train_loss);
        if !monitored.is_finite() {
            return Err(Error::Diverged { epoch, history });
        }
        let reached = config
            .target_train_accuracy
            .is_some_and(|t| record.train_accuracy >= t);
        history.epochs.push(record);

        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, network.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if reached || config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    if config.restore_best_weights {
        if let Some((_, net)) = best {
            network = net;
        }
    }
    Ok((TrainedModel { network, n_classes }, history))
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}
