use serde::{Deserialize, Serialize};

use super::types::normalize_weights;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, ConvergenceCriteria, DistillLoss};

/// Tolerance on the sum of explicitly supplied consensus weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Every knob of the collaboration loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollaborationConfig {
    pub parties: usize,
    pub rounds: usize,
    /// Public samples scored per round; clamped to the public set size.
    pub subset_size: usize,
    /// Consensus weight per party; uniform when absent.
    pub weights: Option<Vec<f64>>,
    /// Rescale `weights` to sum to one instead of rejecting them.
    pub normalize_weights: bool,
    pub digest_epochs: usize,
    pub digest_batch_size: usize,
    pub revisit_epochs: usize,
    /// Defaults to `min(32, N_k)` per party.
    pub revisit_batch_size: Option<usize>,
    pub distill_loss: DistillLoss,
    pub optimizer: AdamConfig,
    /// Early-stopping rule for both transfer-learning phases.
    pub transfer: ConvergenceCriteria,
    /// Fraction of the public set held out to decide public-phase convergence.
    pub public_validation_fraction: f64,
    pub seed: u64,
}

impl Default for CollaborationConfig {
    fn default() -> Self {
        Self {
            parties: 10,
            rounds: 10,
            subset_size: 5000,
            weights: None,
            normalize_weights: false,
            digest_epochs: 1,
            digest_batch_size: 256,
            revisit_epochs: 2,
            revisit_batch_size: None,
            distill_loss: DistillLoss::Mae,
            optimizer: AdamConfig::default(),
            transfer: ConvergenceCriteria::default(),
            public_validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl CollaborationConfig {
    /// Check every invariant that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.parties == 0 {
            return Err(Error::Config("parties: must be at least 1".into()));
        }
        if self.subset_size == 0 {
            return Err(Error::Config("subset_size: must be at least 1".into()));
        }
        if self.digest_batch_size == 0 {
            return Err(Error::Config("digest_batch_size: must be at least 1".into()));
        }
        if self.revisit_batch_size == Some(0) {
            return Err(Error::Config("revisit_batch_size: must be at least 1".into()));
        }
        if self.transfer.batch_size == 0 {
            return Err(Error::Config("transfer.batch_size: must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.public_validation_fraction) {
            return Err(Error::Config(format!(
                "public_validation_fraction: {} not in [0, 1)",
                self.public_validation_fraction
            )));
        }
        let AdamConfig { lr, beta1, beta2, epsilon } = self.optimizer;
        if !(lr > 0.0 && lr.is_finite()) || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
            return Err(Error::Config(format!("optimizer: invalid Adam hyperparameters {:?}", self.optimizer)));
        }
        self.resolved_weights().map(|_| ())
    }

    /// Consensus weights `c_k`, summing to one.
    pub fn resolved_weights(&self) -> Result<Vec<f64>> {
        let m = self.parties;
        let Some(w) = &self.weights else {
            return Ok(vec![1.0 / m as f64; m]);
        };
        if w.len() != m {
            return Err(Error::Config(format!("weights: {} entries for {m} parties", w.len())));
        }
        let normalized = normalize_weights(w)?;
        let sum: f64 = w.iter().sum();
        if !self.normalize_weights && (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!(
                "weights: sum to {sum}, must be 1 ± {WEIGHT_SUM_TOLERANCE} (or set normalize_weights = true)"
            )));
        }
        Ok(normalized)
    }

    /// Subset size actually used against a public set of `n0` samples.
    pub fn effective_subset_size(&self, n0: usize) -> usize {
        self.subset_size.min(n0)
    }

    pub fn revisit_batch_for(&self, private_len: usize) -> usize {
        self.revisit_batch_size.unwrap_or_else(|| 32.min(private_len)).max(1)
    }
}
