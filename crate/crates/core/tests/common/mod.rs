//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use fedmd::protocol::{ConsensusTargets, PartyMetrics, Phase, ScoreMatrix, SubsetSelection};
use fedmd::transport::Message;
use fedmd::Tensor;
use rand::Rng;

pub fn random_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1e3f32..1e3)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// A message of a uniformly chosen variant with random, self-consistent contents.
pub fn random_message<R: Rng>(rng: &mut R) -> Message {
    let round = rng.random_range(0..1000usize);
    let party = rng.random_range(0..64usize);
    let rows = rng.random_range(0..20usize);
    let cols = rng.random_range(1..12usize);
    match rng.random_range(0..5) {
        0 => Message::ScoreReport(ScoreMatrix {
            party,
            round,
            scores: random_tensor(rng, rows, cols),
        }),
        1 => Message::ConsensusBroadcast(ConsensusTargets {
            round,
            targets: random_tensor(rng, rows, cols),
        }),
        2 => Message::SubsetAnnouncement(SubsetSelection {
            round,
            indices: (0..rows).map(|_| rng.random_range(0..u32::MAX as usize)).collect(),
        }),
        3 => Message::RoundComplete { round },
        _ => Message::PartyMetrics(PartyMetrics {
            phase: match rng.random_range(0..3) {
                0 => Phase::Baseline,
                1 => Phase::Round(round.max(1)),
                _ => Phase::Pooled,
            },
            party,
            accuracy: rng.random_range(0.0..=1.0),
            digest_loss: rng.random_bool(0.5).then(|| rng.random_range(0.0..10.0)),
            revisit_loss: rng.random_bool(0.5).then(|| rng.random_range(0.0..10.0)),
            wall_ms: rng.random(),
        }),
    }
}

/// Random byte strings biased towards plausible frame headers.
pub fn fuzz_input<R: Rng>(rng: &mut R) -> Vec<u8> {
    let len = rng.random_range(0..80);
    let mut bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
    if len >= 9 && rng.random_bool(0.5) {
        bytes[..4].copy_from_slice(&((len - 4) as u32).to_be_bytes());
        bytes[4] = rng.random_range(0..7);
        bytes[5..9].copy_from_slice(&1u32.to_be_bytes());
    }
    bytes
}

/// A fast experiment: 4 classes in 8 dimensions, small public set.
pub fn small_config(parties: usize, rounds: usize, seed: u64) -> fedmd::experiments::ExperimentConfig {
    use fedmd::experiments::{DataSpec, ExperimentConfig, SyntheticSpec};
    let mut config = ExperimentConfig {
        name: "small".into(),
        ..ExperimentConfig::default()
    };
    config.collaboration.parties = parties;
    config.collaboration.rounds = rounds;
    config.collaboration.seed = seed;
    config.collaboration.subset_size = 128;
    config.collaboration.digest_epochs = 5;
    config.collaboration.transfer.max_epochs = 30;
    config.data = DataSpec::Synthetic(SyntheticSpec {
        classes: 4,
        dim: 8,
        pool_per_class: 40,
        test_per_class: 50,
        public_size: 400,
        public_classes: 3,
        ..SyntheticSpec::default()
    });
    config.pooled = false;
    config
}
