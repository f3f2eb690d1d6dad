//! Classification and distillation losses. Reductions accumulate in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loss used when a party digests the consensus scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillLoss {
    /// Mean absolute error on raw logits.
    #[default]
    Mae,
    /// Mean squared error on raw logits.
    Mse,
}

/// Numerically stable softmax of one row, in `f64`.
pub(crate) fn softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean softmax cross-entropy and its gradient `(softmax − onehot) / B`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (rows, classes) = (logits.rows(), logits.cols());
    if labels.len() != rows {
        return Err(Error::shape("cross_entropy (labels)", rows, labels.len()));
    }
    if rows == 0 {
        return Err(Error::shape("cross_entropy (batch size)", "at least 1 row", 0));
    }
    let mut grad = Vec::with_capacity(rows * classes);
    let mut total = 0.0f64;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Index {
                context: "cross_entropy label",
                index: label,
                bound: classes,
            });
        }
        let row = logits.row(r);
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let log_sum: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
        total += -(row[label] as f64 - max - log_sum);
        let probs = softmax_row(row);
        grad.extend(probs.iter().enumerate().map(|(c, &p)| {
            let onehot = if c == label { 1.0 } else { 0.0 };
            ((p - onehot) / rows as f64) as f32
        }));
    }
    Ok((total / rows as f64, Tensor::matrix(rows, classes, grad)?))
}

/// Distillation loss between raw logits and consensus targets.
///
/// MAE uses the subgradient `sign(logits − targets) / (B·C)`, zero at ties.
pub fn distill_loss(logits: &Tensor, targets: &Tensor, kind: DistillLoss) -> Result<(f64, Tensor)> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            "distill_loss",
            format!("{:?}", logits.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    let n = logits.len();
    if n == 0 {
        return Err(Error::shape("distill_loss (batch size)", "at least 1 entry", 0));
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0f64;
    let grad = logits
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(&l, &t)| {
            let diff = l as f64 - t as f64;
            match kind {
                DistillLoss::Mae => {
                    total += diff.abs();
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    (sign * scale) as f32
                }
                DistillLoss::Mse => {
                    total += diff * diff;
                    (2.0 * diff * scale) as f32
                }
            }
        })
        .collect();
    Ok((total * scale, Tensor::new(logits.shape().to_vec(), grad)?))
}
