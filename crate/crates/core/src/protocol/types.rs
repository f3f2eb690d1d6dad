use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Rows of the public dataset used as the communication basis for one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub round: usize,
    pub indices: Vec<usize>,
}

impl SubsetSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One party's raw logits on the round's public subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub party: usize,
    pub round: usize,
    pub scores: Tensor,
}

/// The server's weighted average of every party's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusTargets {
    pub round: usize,
    pub targets: Tensor,
}

/// Where a metrics row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    /// After transfer learning, before any collaboration.
    Baseline,
    /// After the digest and revisit steps of round `j` (1-based).
    Round(usize),
    /// Trained on the union of every private set.
    Pooled,
}

/// Test accuracy and losses a party reports for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartyMetrics {
    pub phase: Phase,
    pub party: usize,
    pub accuracy: f64,
    pub digest_loss: Option<f64>,
    pub revisit_loss: Option<f64>,
    pub wall_ms: u64,
}

impl PartyMetrics {
    /// Equality ignoring the wall-clock column.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self { wall_ms: 0, ..*self } == Self { wall_ms: 0, ..*other }
    }
}

/// Normalise weights to sum to one; all must be non-negative and at least one positive.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::Config(format!("weight c_{k} = {w} must be finite and non-negative")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("consensus weights must not all be zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}
