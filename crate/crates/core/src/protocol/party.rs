use std::ops::Range;
use std::time::Instant;

use super::config::CollaborationConfig;
use super::types::{ConsensusTargets, PartyMetrics, Phase, ScoreMatrix, SubsetSelection};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    accuracy_among, fit_to_convergence, train_distill, train_supervised, AdamConfig, AdamState, ConvergenceCriteria, Network,
    TrainReport,
};
use crate::rng::{party_stream, Stream};

/// Everything one participant owns. Only score matrices ever leave it.
#[derive(Debug, Clone)]
pub struct PartyState {
    pub id: usize,
    pub net: Network,
    pub private: Dataset,
    /// Optimizer state of the supervised phases (transfer learning, revisit).
    pub adam: AdamState,
    /// Separate optimizer state for matching the consensus, so momentum from
    /// supervised training never leaks into the digest step.
    pub digest_adam: AdamState,
    /// Outputs that compete when scoring test accuracy; all of them when unset.
    pub eval_classes: Option<Range<usize>>,
    /// Which per-party random streams this party draws from; its id by default.
    pub stream_key: usize,
    master_seed: u64,
}

/// Public data as every party sees it: the full set plus the fixed split
/// used for transfer-learning convergence checks.
#[derive(Debug, Clone)]
pub struct PublicData {
    pub full: Dataset,
    pub train: Dataset,
    pub validation: Dataset,
}

impl PublicData {
    /// Hold out `fraction` of the public set (seeded) for validation; with a
    /// zero fraction the training set doubles as the validation set.
    pub fn split(full: Dataset, fraction: f64, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..full.len()).collect();
        order.shuffle(&mut crate::rng::stream(seed, &[Stream::PublicPhase as u64, u64::MAX]));
        let held = ((full.len() as f64) * fraction).round() as usize;
        let (val_idx, train_idx) = order.split_at(held.min(full.len().saturating_sub(1)));
        let mut train_idx = train_idx.to_vec();
        let mut val_idx = val_idx.to_vec();
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        let train = full.subset(&train_idx)?;
        let validation = if val_idx.is_empty() {
            train.clone()
        } else {
            full.subset(&val_idx)?
        };
        Ok(Self { full, train, validation })
    }
}

/// Losses from the two transfer-learning phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferReports {
    pub public: TrainReport,
    pub private: TrainReport,
}

/// Losses from one round's digest and revisit steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReports {
    pub digest: TrainReport,
    pub revisit: TrainReport,
}

fn in_step(party: usize, step: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        e @ Error::Protocol { .. } => e,
        other => Error::protocol(Some(party), step, other.to_string()),
    }
}

impl PartyState {
    /// A party with a freshly initialised MLP drawn from its own seeded stream.
    pub fn new(
        id: usize,
        hidden: &[usize],
        private: Dataset,
        classes: usize,
        optimizer: AdamConfig,
        master_seed: u64,
    ) -> Result<Self> {
        let mut rng = party_stream(master_seed, id, Stream::Init, 0);
        let net = Network::mlp(private.feature_dim(), hidden, classes, format!("mlp{hidden:?}"), &mut rng)?;
        Ok(Self::with_network(id, net, private, optimizer, master_seed))
    }

    pub fn with_network(id: usize, net: Network, private: Dataset, optimizer: AdamConfig, master_seed: u64) -> Self {
        let adam = AdamState::new(optimizer, &net.param_sizes());
        let digest_adam = adam.clone();
        Self {
            id,
            net,
            private,
            adam,
            digest_adam,
            eval_classes: None,
            stream_key: id,
            master_seed,
        }
    }

    /// Restrict test-time predictions to `classes` (the private task's labels).
    pub fn with_eval_classes(mut self, classes: Range<usize>) -> Self {
        self.eval_classes = Some(classes);
        self
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Train on the public set, then on the private set, each until the
    /// convergence rule fires.
    pub fn transfer_learn(&mut self, public: &PublicData, criteria: &ConvergenceCriteria) -> Result<TransferReports> {
        if public.full.feature_dim() != self.net.input_dim() || self.private.feature_dim() != self.net.input_dim() {
            return Err(Error::shape(
                "transfer_learn (feature dim)",
                self.net.input_dim(),
                format!("public {} / private {}", public.full.feature_dim(), self.private.feature_dim()),
            ));
        }
        let mut rng = party_stream(self.master_seed, self.stream_key, Stream::PublicPhase, 0);
        let public_report = fit_to_convergence(&mut self.net, &mut self.adam, &public.train, Some(&public.validation), criteria, &mut rng)?;
        let private_report = self.train_private(&self.private.clone(), criteria, Stream::PrivatePhase)?;
        Ok(TransferReports {
            public: public_report,
            private: private_report,
        })
    }

    /// Private-phase training on `data` (the party's own set, or the pooled
    /// union for the upper-bound baseline). Convergence is judged on the
    /// training loss since no labelled hold-out exists.
    pub fn train_private(&mut self, data: &Dataset, criteria: &ConvergenceCriteria, stream: Stream) -> Result<TrainReport> {
        let mut rng = party_stream(self.master_seed, self.stream_key, stream, 0);
        let private_criteria = ConvergenceCriteria {
            batch_size: criteria.batch_size.min(data.len()).max(1),
            ..*criteria
        };
        fit_to_convergence(&mut self.net, &mut self.adam, data, None, &private_criteria, &mut rng)
    }

    /// Communicate step: raw logits on the selected public rows, in selection order.
    pub fn compute_scores(&self, public: &Dataset, selection: &SubsetSelection) -> Result<ScoreMatrix> {
        if let Some(&bad) = selection.indices.iter().find(|&&i| i >= public.len()) {
            return Err(Error::protocol(
                Some(self.id),
                "communicate",
                format!("subset index {bad} outside public set of {}", public.len()),
            ));
        }
        let inputs = public.features().select_rows(&selection.indices)?;
        let scores = if inputs.rows() == 0 {
            crate::tensor::Tensor::zeros(vec![0, self.net.output_dim()])
        } else {
            self.net.forward(&inputs).map_err(in_step(self.id, "communicate"))?
        };
        Ok(ScoreMatrix {
            party: self.id,
            round: selection.round,
            scores,
        })
    }

    /// Digest step: distill the consensus on the selected public rows.
    pub fn digest(
        &mut self,
        public: &Dataset,
        selection: &SubsetSelection,
        consensus: &ConsensusTargets,
        config: &CollaborationConfig,
    ) -> Result<TrainReport> {
        if consensus.round != selection.round {
            return Err(Error::protocol(
                Some(self.id),
                "digest",
                format!("consensus for round {} but subset for round {}", consensus.round, selection.round),
            ));
        }
        let inputs = public.features().select_rows(&selection.indices)?;
        let mut rng = party_stream(self.master_seed, self.stream_key, Stream::Digest, selection.round);
        train_distill(
            &mut self.net,
            &mut self.digest_adam,
            &inputs,
            &consensus.targets,
            config.distill_loss,
            config.digest_epochs,
            config.digest_batch_size,
            &mut rng,
        )
        .map_err(in_step(self.id, "digest"))
    }

    /// Revisit step: a few supervised epochs on the private set.
    pub fn revisit(&mut self, round: usize, config: &CollaborationConfig) -> Result<TrainReport> {
        let mut rng = party_stream(self.master_seed, self.stream_key, Stream::Revisit, round);
        let batch = config.revisit_batch_for(self.private.len());
        train_supervised(&mut self.net, &mut self.adam, &self.private, config.revisit_epochs, batch, &mut rng)
            .map_err(in_step(self.id, "revisit"))
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<f64> {
        let classes = self.eval_classes.clone().unwrap_or(0..self.net.output_dim());
        accuracy_among(&self.net, test, classes).map_err(in_step(self.id, "evaluate"))
    }

    /// Digest, revisit and evaluate for one round.
    pub fn finish_round(
        &mut self,
        public: &Dataset,
        test: &Dataset,
        selection: &SubsetSelection,
        consensus: &ConsensusTargets,
        config: &CollaborationConfig,
        events: &super::EventLog,
    ) -> Result<(PartyMetrics, RoundReports)> {
        let start = Instant::now();
        let round = selection.round;
        events.record(round, Some(self.id), super::Step::DigestStart);
        let digest = self.digest(public, selection, consensus, config)?;
        events.record(round, Some(self.id), super::Step::RevisitStart);
        let revisit = self.revisit(round, config)?;
        events.record(round, Some(self.id), super::Step::RevisitEnd);
        let acc = self.evaluate(test)?;
        let metrics = PartyMetrics {
            phase: Phase::Round(round),
            party: self.id,
            accuracy: acc,
            digest_loss: digest.final_loss(),
            revisit_loss: revisit.final_loss(),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        Ok((metrics, RoundReports { digest, revisit }))
    }

    /// Transfer learning followed by the baseline evaluation.
    pub fn baseline(
        &mut self,
        public: &PublicData,
        test: &Dataset,
        criteria: &ConvergenceCriteria,
    ) -> Result<(PartyMetrics, TransferReports)> {
        let start = Instant::now();
        let reports = self.transfer_learn(public, criteria).map_err(in_step(self.id, "transfer"))?;
        let acc = self.evaluate(test)?;
        Ok((
            PartyMetrics {
                phase: Phase::Baseline,
                party: self.id,
                accuracy: acc,
                digest_loss: None,
                revisit_loss: None,
                wall_ms: start.elapsed().as_millis() as u64,
            },
            reports,
        ))
    }
}
