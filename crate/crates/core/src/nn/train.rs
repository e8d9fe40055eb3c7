use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Gradients, MlpNetwork};
use crate::classifier::{cross_entropy, softmax_rows, Classifier};
use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if let Optimizer::Momentum { mu } = self.optimizer {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::config("momentum must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean objective (data loss + regularization) per epoch.
    pub epoch_loss: Vec<f64>,
    /// Batches an objective declined to use.
    pub skipped_batches: usize,
}

/// Where in the run a batch sits; `seed` is unique to the batch.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    pub seed: u64,
}

/// Batch-mean data loss and its parameter gradient.
#[derive(Debug, Clone)]
pub struct BatchGrad {
    pub loss: f64,
    pub grads: Gradients,
}

/// A per-batch training objective. Regularization is added by [`fit`].
pub trait Objective {
    /// `Ok(None)` skips the batch without updating the network.
    fn batch(
        &mut self,
        net: &MlpNetwork,
        xs: ArrayView2<f64>,
        ys: &[usize],
        step: &StepInfo,
    ) -> Result<Option<BatchGrad>>;
}

/// Plain mean softmax cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Objective for CrossEntropy {
    fn batch(
        &mut self,
        net: &MlpNetwork,
        xs: ArrayView2<f64>,
        ys: &[usize],
        _step: &StepInfo,
    ) -> Result<Option<BatchGrad>> {
        let (loss, grads) = cross_entropy_gradients(net, xs, ys);
        Ok(Some(BatchGrad { loss, grads }))
    }
}

/// Mean cross-entropy over the rows of `xs` and its parameter gradient.
pub fn cross_entropy_gradients(
    net: &MlpNetwork,
    xs: ArrayView2<f64>,
    ys: &[usize],
) -> (f64, Gradients) {
    let pass = net.forward_pass(xs);
    let logits = pass.logits();
    let b = ys.len() as f64;
    let loss = logits
        .rows()
        .into_iter()
        .zip(ys)
        .map(|(z, &y)| cross_entropy(z, y))
        .sum::<f64>()
        / b;
    let mut delta = softmax_rows(logits.view());
    for (mut row, &y) in delta.rows_mut().into_iter().zip(ys) {
        row[y] -= 1.0;
    }
    delta /= b;
    let grads = net.backward(&pass, delta, true, false).0.expect("params");
    (loss, grads)
}

pub fn mean_cross_entropy<C: Classifier + ?Sized>(net: &C, data: &LabeledDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for start in (0..data.len()).step_by(2048) {
        let end = (start + 2048).min(data.len());
        let logits = net.logits_batch(data.inputs().slice(ndarray::s![start..end, ..]));
        for (z, &y) in logits.rows().into_iter().zip(&data.labels()[start..end]) {
            total += cross_entropy(z, y);
        }
    }
    total / data.len() as f64
}

/// Fraction of examples whose prediction matches the label.
pub fn accuracy<C: Classifier + ?Sized>(net: &C, data: &LabeledDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(2048) {
        let end = (start + 2048).min(data.len());
        let pred = net.predict_batch(data.inputs().slice(ndarray::s![start..end, ..]));
        correct += pred
            .iter()
            .zip(&data.labels()[start..end])
            .filter(|(p, y)| p == y)
            .count();
    }
    correct as f64 / data.len() as f64
}

/// Trains `net` in place with softmax cross-entropy plus its L2 penalty.
pub fn train(net: &mut MlpNetwork, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    fit(net, data, cfg, &mut CrossEntropy)
}

/// Mini-batch training loop shared by every objective.
///
/// Each epoch visits the data in a permutation drawn from
/// `(cfg.seed, epoch)`, so a run is reproducible bit for bit.
pub fn fit<O: Objective + ?Sized>(
    net: &mut MlpNetwork,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    objective: &mut O,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("training data is empty"));
    }
    check_dim(net.input_dim(), data.dim())?;
    if data.num_classes() > net.num_classes() {
        return Err(Error::config(format!(
            "data has {} classes but network emits {}",
            data.num_classes(),
            net.num_classes()
        )));
    }

    let mut report = TrainReport::default();
    let mut velocity: Option<Gradients> = None;
    for epoch in 0..cfg.epochs {
        let epoch_seed = rng::derive_seed(cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::stream(epoch_seed, 0));

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs = data.inputs().select(Axis(0), chunk);
            let ys: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let step = StepInfo {
                epoch,
                batch: b,
                seed: rng::derive_seed(epoch_seed, b as u64 + 1),
            };
            let Some(BatchGrad { loss, mut grads }) = objective.batch(net, xs.view(), &ys, &step)?
            else {
                report.skipped_batches += 1;
                continue;
            };
            let loss = loss + net.regularization();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            net.add_regularization_gradient(&mut grads);
            if !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}"
                )));
            }
            match cfg.optimizer {
                Optimizer::Sgd => net.apply_update(&grads, cfg.learning_rate),
                Optimizer::Momentum { mu } => {
                    let v = velocity.get_or_insert_with(|| Gradients::zeros_like(net));
                    v.scale(mu);
                    v.add_scaled(&grads, 1.0);
                    net.apply_update(v, cfg.learning_rate);
                }
            }
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let mean = if seen > 0 { loss_sum / seen as f64 } else { f64::NAN };
        log::info!("epoch {epoch}: loss {mean:.6}");
        report.epoch_loss.push(mean);
    }
    net.meta.epochs += cfg.epochs;
    net.meta.seed = Some(cfg.seed);
    Ok(report)
}
