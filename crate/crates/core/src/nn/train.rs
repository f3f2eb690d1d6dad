use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{cross_entropy, distill_loss, DistillLoss};
use super::network::Network;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loss history of one training call.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first minibatch, measured before any update.
    pub initial_loss: Option<f64>,
}

impl TrainReport {
    pub fn epochs_completed(&self) -> usize {
        self.epoch_losses.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Early-stopping rule for "train to convergence".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceCriteria {
    pub max_epochs: usize,
    /// Epochs without sufficient improvement before stopping.
    pub patience: usize,
    /// Improvement that resets patience: validation accuracy as a fraction
    /// (0.001 = 0.1 percentage point) or, without a validation set, the drop
    /// in mean epoch loss.
    pub min_delta: f64,
    pub batch_size: usize,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            patience: 5,
            min_delta: 0.001,
            batch_size: 32,
        }
    }
}

fn apply_grads(net: &mut Network, state: &mut AdamState, grads: Vec<super::network::LayerGrad>) -> Result<()> {
    let flat: Vec<&[f32]> = grads
        .iter()
        .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
        .collect();
    let mut params = net.params_mut();
    adam_step(&mut params, &flat, state)
}

/// Shared minibatch loop. `loss` maps (logits, batch indices) to a loss and
/// its gradient with respect to the logits.
#[allow(clippy::too_many_arguments)]
fn descend<R, F>(
    net: &mut Network,
    state: &mut AdamState,
    inputs: &Tensor,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
    mut loss: F,
) -> Result<TrainReport>
where
    R: Rng + ?Sized,
    F: FnMut(&Tensor, &[usize]) -> Result<(f64, Tensor)>,
{
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(batch_size) {
            let batch = inputs.select_rows(chunk)?;
            let (logits, trace) = net.forward_traced(&batch)?;
            let (value, grad) = loss(&logits, chunk)?;
            if !value.is_finite() || !grad.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            report.initial_loss.get_or_insert(value);
            total += value * chunk.len() as f64;
            let grads = net.backward(&trace, &grad)?;
            apply_grads(net, state, grads)?;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Minibatch cross-entropy descent on labelled data.
pub fn train_supervised<R: Rng + ?Sized>(
    net: &mut Network,
    state: &mut AdamState,
    data: &Dataset,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Config(format!("dataset '{}' is empty", data.name())));
    }
    let labels = data.labels();
    descend(net, state, data.features(), epochs, batch_size, rng, |logits, idx| {
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        cross_entropy(logits, &batch_labels)
    })
}

/// Minibatch descent pulling the network's logits towards `targets`.
#[allow(clippy::too_many_arguments)]
pub fn train_distill<R: Rng + ?Sized>(
    net: &mut Network,
    state: &mut AdamState,
    inputs: &Tensor,
    targets: &Tensor,
    kind: DistillLoss,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<TrainReport> {
    if targets.rows() != inputs.rows() || targets.cols() != net.output_dim() {
        return Err(Error::shape(
            "train_distill (targets)",
            format!("[{}, {}]", inputs.rows(), net.output_dim()),
            format!("{:?}", targets.shape()),
        ));
    }
    descend(net, state, inputs, epochs, batch_size, rng, |logits, idx| {
        distill_loss(logits, &targets.select_rows(idx)?, kind)
    })
}

/// Index of the largest logit in each row; ties go to the lowest index.
pub fn predict(net: &Network, inputs: &Tensor) -> Result<Vec<usize>> {
    predict_among(net, inputs, 0..net.output_dim())
}

/// Like [`predict`], but only the outputs in `classes` compete.
pub fn predict_among(net: &Network, inputs: &Tensor, classes: Range<usize>) -> Result<Vec<usize>> {
    const CHUNK: usize = 1024;
    if classes.is_empty() || classes.end > net.output_dim() {
        return Err(Error::Config(format!(
            "class range {classes:?} is not a non-empty part of 0..{}",
            net.output_dim()
        )));
    }
    let mut out = Vec::with_capacity(inputs.rows());
    let all: Vec<usize> = (0..inputs.rows()).collect();
    for idx in all.chunks(CHUNK) {
        let logits = net.forward(&inputs.select_rows(idx)?)?;
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let best = classes
                .clone()
                .fold(classes.start, |best, c| if row[c] > row[best] { c } else { best });
            out.push(best);
        }
    }
    Ok(out)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    accuracy_among(net, data, 0..net.output_dim())
}

/// Accuracy when only the outputs in `classes` compete.
pub fn accuracy_among(net: &Network, data: &Dataset, classes: Range<usize>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config(format!("cannot score empty dataset '{}'", data.name())));
    }
    let predictions = predict_among(net, data.features(), classes)?;
    let hits = predictions
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Train one epoch at a time until the monitored quantity stalls for
/// `patience` epochs: accuracy on `validation` when given (must rise by more
/// than `min_delta`), otherwise the mean training loss of the epoch (must
/// fall by more than `min_delta`).
pub fn fit_to_convergence<R: Rng + ?Sized>(
    net: &mut Network,
    state: &mut AdamState,
    train: &Dataset,
    validation: Option<&Dataset>,
    criteria: &ConvergenceCriteria,
    rng: &mut R,
) -> Result<TrainReport> {
    let mut report = TrainReport::default();
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    for epoch in 0..criteria.max_epochs {
        let step = train_supervised(net, state, train, 1, criteria.batch_size, rng).map_err(|e| match e {
            Error::Divergence { .. } => Error::Divergence { epoch },
            other => other,
        })?;
        report.initial_loss = report.initial_loss.or(step.initial_loss);
        let epoch_loss = step.final_loss();
        report.epoch_losses.extend(step.epoch_losses);

        let score = match validation {
            Some(v) => accuracy(net, v)?,
            None => -epoch_loss.unwrap_or(f64::INFINITY),
        };
        if score > best + criteria.min_delta {
            best = score;
            stale = 0;
        } else {
            stale += 1;
            if stale >= criteria.patience {
                break;
            }
        }
    }
    Ok(report)
}
