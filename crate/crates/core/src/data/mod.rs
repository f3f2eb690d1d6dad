//! Datasets, IDX ingestion, synthetic generators and private-set partitioners.

mod dataset;
pub mod idx;
mod partition;
mod synth;

pub use dataset::Dataset;
pub use idx::{load_idx_dataset, parse_idx, parse_idx_labels, parse_idx_raw, IdxArray};
pub use partition::{
    partition_iid, partition_noniid, to_superclasses, NoniidPartition, Partition, PartitionMode, PartitionPlan,
};
pub use synth::{synth_blobs, synth_public, BlobGenerator, CENTER_RADIUS};
