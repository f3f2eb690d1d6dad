//! The reference experiments.

use super::config::{CANONICAL_DIGEST_EPOCHS, DataSpec, ExperimentConfig, PartitionSpec, SyntheticSpec};
use crate::data::PartitionMode;
use crate::protocol::CollaborationConfig;

/// Ten heterogeneous parties, six classes, three private samples per class.
pub fn blobs10(seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.collaboration.seed = seed;
    config
}

/// Three superclasses of two subclasses each, split between two parties so
/// that each party sees exactly one subclass of every superclass.
pub fn superclass_pair(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: "superclass-pair".into(),
        collaboration: CollaborationConfig {
            parties: 2,
            rounds: 10,
            subset_size: 512,
            digest_epochs: CANONICAL_DIGEST_EPOCHS,
            seed,
            ..CollaborationConfig::default()
        },
        // Orthogonal, noise-dominated subclass clusters in a wide input space:
        // a party's model then has no systematic preference on a subclass it
        // never saw, so anything it learns about it comes from the consensus.
        data: DataSpec::Synthetic(SyntheticSpec {
            classes: 6,
            dim: 96,
            spread: 1.25,
            public_spread: 1.25,
            orthogonal_centers: true,
            public_classes: 3,
            ..SyntheticSpec::default()
        }),
        partition: PartitionSpec {
            mode: PartitionMode::Noniid,
            samples_per_class: 20,
            subclass_to_superclass: Some(vec![0, 1, 2, 0, 1, 2]),
        },
        architectures: Some(vec![vec![64], vec![32, 32]]),
        pooled: true,
        ..ExperimentConfig::default()
    }
}
