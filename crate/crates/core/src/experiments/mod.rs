//! Experiment definitions, baselines, metrics files and summaries.

pub mod canonical;
mod config;
mod metrics;
mod runner;

pub use config::{CANONICAL_DIGEST_EPOCHS, DataSpec, ExperimentConfig, IdxSpec, OutputSpec, PartitionSpec, SyntheticSpec, DEFAULT_ARCHITECTURES};
pub use metrics::{MetricsLog, RunMetadata, CSV_HEADER};
pub use runner::{baseline_pooled, build, run_experiment, run_subclass_transfer, SubclassTransfer, summarize, write_outputs, Experiment, ExperimentOutcome, Summary};
