use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSpec, ExperimentConfig};
use super::metrics::{MetricsLog, RunMetadata};
use crate::data::{
    load_idx_dataset, partition_iid, partition_noniid, synth_public, to_superclasses, BlobGenerator, Dataset,
    PartitionMode, PartitionPlan,
};
use crate::error::{Error, Result};
use crate::protocol::{run_fedmd, run_round, transfer_all, EventLog, PartyMetrics, PartyState, Phase, PublicData};
use crate::rng::{derive_seed, Stream};

/// Materialised inputs of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub public: Dataset,
    pub test: Dataset,
    pub privates: Vec<Dataset>,
    /// Subclass label of every test sample (non-i.i.d. synthetic runs only).
    pub test_subclasses: Option<Vec<usize>>,
    /// `assigned[k][s]`: subclass of superclass `s` held by party `k` (non-i.i.d. only).
    pub assigned: Option<Vec<Vec<usize>>>,
    /// Output width shared by every network.
    pub classes: usize,
    /// Output slots of the private task; only these compete at test time.
    pub private_classes: Range<usize>,
}

impl Experiment {
    /// Fresh parties with their configured architectures and untrained weights.
    pub fn parties(&self, config: &ExperimentConfig) -> Result<Vec<PartyState>> {
        config
            .architectures()
            .iter()
            .zip(&self.privates)
            .enumerate()
            .map(|(k, (arch, private))| {
                PartyState::new(
                    k,
                    arch,
                    private.clone(),
                    self.classes,
                    config.collaboration.optimizer,
                    config.collaboration.seed,
                )
                .map(|p| p.with_eval_classes(self.private_classes.clone()))
            })
            .collect()
    }
}

fn offset_labels(d: Dataset, offset: usize, classes: usize) -> Result<Dataset> {
    let labels = d.labels().iter().map(|l| l + offset).collect();
    d.relabel(labels, classes)
}

/// Generate or load the datasets and split the private pool between parties.
pub fn build(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let m = config.collaboration.parties;
    let seed = config.data_seed();
    let sub = |tag: u64| derive_seed(seed, &[0xda7a, tag]);
    // Private labels sit after the public ones in a shared output space.
    let (public, pool, test, offset, fixed_classes) = match &config.data {
        DataSpec::Synthetic(s) => {
            let domain = if s.orthogonal_centers {
                BlobGenerator::orthogonal(s.classes, s.dim, s.spread, sub(1))?
            } else {
                BlobGenerator::new(s.classes, s.dim, s.spread, sub(1))?
            };
            let pool = domain.sample(s.pool_per_class, sub(2), "pool")?;
            let test = domain.sample(s.test_per_class, sub(3), "test")?;
            let public_task = BlobGenerator::new(s.public_classes, s.dim, s.public_spread, sub(4))?;
            let public = synth_public(&domain, &public_task, s.public_size, sub(5))?;
            (public, pool, test, s.public_classes, None)
        }
        DataSpec::Idx(s) => {
            let public = load_idx_dataset(&s.public_images, &s.public_labels, None)?;
            let pool = load_idx_dataset(&s.private_images, &s.private_labels, None)?;
            let test = load_idx_dataset(&s.test_images, &s.test_labels, None)?;
            let private_classes = pool.num_classes().max(test.num_classes());
            let pool = pool.relabel(pool.labels().to_vec(), private_classes)?;
            let test = test.relabel(test.labels().to_vec(), private_classes)?;
            (public, pool, test, s.private_label_offset, s.classes)
        }
    };
    if public.feature_dim() != pool.feature_dim() || test.feature_dim() != pool.feature_dim() {
        return Err(Error::Config(format!(
            "feature dims differ: public {}, private {}, test {}",
            public.feature_dim(),
            pool.feature_dim(),
            test.feature_dim()
        )));
    }

    let partition_seed = derive_seed(seed, &[Stream::Partition as u64]);
    let n = config.partition.samples_per_class;
    let (privates, test, private_classes, test_subclasses, assigned) = match config.partition.mode {
        PartitionMode::Iid => {
            let split = partition_iid(&pool, &PartitionPlan::iid(m, n, partition_seed))?;
            (split.parties, test, pool.num_classes(), None, None)
        }
        PartitionMode::Noniid => {
            let map = config.partition.subclass_to_superclass.clone().expect("validated");
            let split = partition_noniid(&pool, &PartitionPlan::noniid(m, n, map.clone(), partition_seed))?;
            let subclasses = test.labels().to_vec();
            let test = to_superclasses(&test, &map)?;
            (split.partition.parties, test, split.num_superclasses, Some(subclasses), Some(split.assigned))
        }
    };
    let needed = (offset + private_classes).max(public.num_classes());
    let classes = fixed_classes.unwrap_or(needed);
    if classes < needed {
        return Err(Error::Config(format!(
            "data.classes: {classes} outputs cannot hold {} public and {private_classes} private classes at offset {offset}",
            public.num_classes()
        )));
    }
    let shift = |d: &Dataset| offset_labels(d.clone(), offset, classes);
    Ok(Experiment {
        public: public.relabel(public.labels().to_vec(), classes)?,
        test: shift(&test)?,
        privates: privates.iter().map(shift).collect::<Result<_>>()?,
        test_subclasses,
        assigned,
        classes,
        private_classes: offset..offset + private_classes,
    })
}

/// Upper bound: each architecture after the public phase, trained on the
/// union of every private set. Returns one pooled row per party.
pub fn baseline_pooled(config: &ExperimentConfig, experiment: &Experiment) -> Result<Vec<PartyMetrics>> {
    let collab = &config.collaboration;
    let public = PublicData::split(experiment.public.clone(), collab.public_validation_fraction, collab.seed)?;
    let refs: Vec<&Dataset> = experiment.privates.iter().collect();
    let pooled = Dataset::concat(&refs, "pooled")?;
    let mut parties = experiment.parties(config)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = parties
            .iter_mut()
            .map(|p| {
                let (public, pooled, test, criteria) = (&public, &pooled, &experiment.test, &collab.transfer);
                s.spawn(move || -> Result<PartyMetrics> {
                    let start = Instant::now();
                    let mut rng = crate::rng::party_stream(p.master_seed(), p.stream_key, Stream::PublicPhase, 0);
                    crate::nn::fit_to_convergence(&mut p.net, &mut p.adam, &public.train, Some(&public.validation), criteria, &mut rng)?;
                    p.train_private(pooled, criteria, Stream::PrivatePhase)?;
                    Ok(PartyMetrics {
                        phase: Phase::Pooled,
                        party: p.id,
                        accuracy: p.evaluate(test)?,
                        digest_loss: None,
                        revisit_loss: None,
                        wall_ms: start.elapsed().as_millis() as u64,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Data("pooled worker panicked".into()))))
            .collect()
    })
}

/// Headline statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub parties: Vec<usize>,
    pub baseline: Vec<f64>,
    #[serde(rename = "final")]
    pub final_accuracy: Vec<f64>,
    pub pooled: Option<Vec<f64>>,
    pub per_party_gain: Vec<f64>,
    pub mean_gain: f64,
    pub per_party_gap_to_pooled: Option<Vec<f64>>,
    pub mean_gap_to_pooled: Option<f64>,
    pub mean_baseline: f64,
    pub mean_final: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Gains over baseline (`final − baseline`) and gaps to pooled (`pooled − final`).
/// "Final" is the last collaboration round, or the baseline when no round ran.
pub fn summarize(log: &MetricsLog) -> Result<Summary> {
    let parties = log.parties();
    if parties.is_empty() {
        return Err(Error::Data("metrics log has no rows".into()));
    }
    let last = log.last_round();
    let mut baseline = Vec::new();
    let mut final_accuracy = Vec::new();
    let mut pooled = Vec::new();
    for &k in &parties {
        let b = log
            .row(Phase::Baseline, k)
            .ok_or_else(|| Error::Data(format!("party {k} has no baseline row")))?
            .accuracy;
        let f = last.and_then(|j| log.row(Phase::Round(j), k)).map_or(b, |r| r.accuracy);
        baseline.push(b);
        final_accuracy.push(f);
        if let Some(p) = log.row(Phase::Pooled, k) {
            pooled.push(p.accuracy);
        }
    }
    let per_party_gain: Vec<f64> = final_accuracy.iter().zip(&baseline).map(|(f, b)| f - b).collect();
    let pooled = (pooled.len() == parties.len()).then_some(pooled);
    let gaps = pooled
        .as_ref()
        .map(|p| p.iter().zip(&final_accuracy).map(|(p, f)| p - f).collect::<Vec<_>>());
    Ok(Summary {
        mean_gain: mean(&per_party_gain),
        mean_gap_to_pooled: gaps.as_deref().map(mean),
        per_party_gap_to_pooled: gaps,
        mean_baseline: mean(&baseline),
        mean_final: mean(&final_accuracy),
        parties,
        baseline,
        final_accuracy,
        pooled,
        per_party_gain,
    })
}

impl Summary {
    /// Plain-text table for terminals.
    pub fn table(&self) -> String {
        let mut out = String::from("party  baseline  final    gain     pooled   gap\n");
        for (i, k) in self.parties.iter().enumerate() {
            let pooled = self.pooled.as_ref().map_or("   -   ".to_string(), |p| format!("{:.4}", p[i]));
            let gap = self
                .per_party_gap_to_pooled
                .as_ref()
                .map_or("   -   ".to_string(), |g| format!("{:+.4}", g[i]));
            out.push_str(&format!(
                "{k:>5}  {:.4}    {:.4}   {:+.4}  {pooled}   {gap}\n",
                self.baseline[i], self.final_accuracy[i], self.per_party_gain[i]
            ));
        }
        out.push_str(&format!(
            " mean  {:.4}    {:.4}   {:+.4}",
            self.mean_baseline, self.mean_final, self.mean_gain
        ));
        if let Some(g) = self.mean_gap_to_pooled {
            out.push_str(&format!("           {g:+.4}"));
        }
        out.push('\n');
        out
    }
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub log: MetricsLog,
    pub summary: Summary,
    pub parties: Vec<PartyState>,
}

/// JSON written next to the metrics CSV.
#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    mean_gain: f64,
    per_party_gain: &'a [f64],
    mean_gap_to_pooled: Option<f64>,
    config_hash: &'a str,
    seed: u64,
    version: &'a str,
    summary: &'a Summary,
    effective_config: &'a ExperimentConfig,
}

/// Transfer baselines, collaboration rounds, optional pooled baseline, and
/// (when an output directory is configured) `metrics.csv` + `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let experiment = build(config)?;
    let mut parties = experiment.parties(config)?;
    let mut log = run_fedmd(&config.collaboration, &mut parties, &experiment.public, &experiment.test)?;
    if config.pooled {
        log.rows.extend(baseline_pooled(config, &experiment)?);
    }
    log.meta = RunMetadata {
        config_hash: config.hash()?,
        seed: config.collaboration.seed,
        version: crate::VERSION.to_string(),
    };
    log.validate()?;
    let summary = summarize(&log)?;
    if let Some(dir) = &config.output.dir {
        write_outputs(dir, config, &log, &summary)?;
    }
    Ok(ExperimentOutcome { log, summary, parties })
}

pub fn write_outputs(dir: &Path, config: &ExperimentConfig, log: &MetricsLog, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let csv = dir.join("metrics.csv");
    std::fs::write(&csv, log.to_csv()).map_err(|e| Error::file(&csv, e))?;
    let file = SummaryFile {
        mean_gain: summary.mean_gain,
        per_party_gain: &summary.per_party_gain,
        mean_gap_to_pooled: summary.mean_gap_to_pooled,
        config_hash: &log.meta.config_hash,
        seed: log.meta.seed,
        version: &log.meta.version,
        summary,
        effective_config: config,
    };
    let json = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&json, text + "\n").map_err(|e| Error::file(&json, e))
}

impl Experiment {
    /// Test rows of every subclass that `party` holds no private samples of
    /// (non-i.i.d. runs only), labelled by superclass.
    pub fn unseen_test(&self, party: usize) -> Result<Dataset> {
        let (Some(subclasses), Some(assigned)) = (&self.test_subclasses, &self.assigned) else {
            return Err(Error::Config("unseen-subclass evaluation needs a noniid partition".into()));
        };
        let own = assigned
            .get(party)
            .ok_or(Error::Index { context: "unseen_test party", index: party, bound: assigned.len() })?;
        let rows: Vec<usize> = (0..self.test.len()).filter(|&i| !own.contains(&subclasses[i])).collect();
        self.test.subset(&rows)
    }
}

/// Accuracy of each party on the subclasses it never saw, before and after
/// collaboration.
#[derive(Debug, Clone)]
pub struct SubclassTransfer {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub log: MetricsLog,
}

pub fn run_subclass_transfer(config: &ExperimentConfig) -> Result<SubclassTransfer> {
    let experiment = build(config)?;
    let collab = &config.collaboration;
    let unseen: Vec<Dataset> = (0..collab.parties).map(|k| experiment.unseen_test(k)).collect::<Result<_>>()?;
    let mut parties = experiment.parties(config)?;
    let public = PublicData::split(experiment.public.clone(), collab.public_validation_fraction, collab.seed)?;
    let mut rows: Vec<PartyMetrics> = transfer_all(&mut parties, &public, &experiment.test, collab)?
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    let score = |parties: &[PartyState]| -> Result<Vec<f64>> {
        parties.iter().zip(&unseen).map(|(p, d)| p.evaluate(d)).collect()
    };
    let before = score(&parties)?;
    let events = EventLog::default();
    for round in 1..=collab.rounds {
        rows.extend(run_round(&mut parties, &public.full, &experiment.test, collab, round, &events)?.metrics);
    }
    Ok(SubclassTransfer {
        before,
        after: score(&parties)?,
        log: MetricsLog::new(rows, collab.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(phase: Phase, party: usize, accuracy: f64) -> PartyMetrics {
        PartyMetrics {
            phase,
            party,
            accuracy,
            digest_loss: None,
            revisit_loss: None,
            wall_ms: 0,
        }
    }

    #[test]
    fn hand_built_two_party_summary() {
        let log = MetricsLog::new(
            vec![
                row(Phase::Baseline, 0, 0.5),
                row(Phase::Baseline, 1, 0.6),
                row(Phase::Round(1), 0, 0.6),
                row(Phase::Round(1), 1, 0.65),
                row(Phase::Round(2), 0, 0.7),
                row(Phase::Round(2), 1, 0.7),
            ],
            0,
        );
        let s = summarize(&log).unwrap();
        assert!((s.per_party_gain[0] - 0.2).abs() < 1e-12);
        assert!((s.per_party_gain[1] - 0.1).abs() < 1e-12);
        assert!((s.mean_gain - 0.15).abs() < 1e-12);
        assert!(s.mean_gap_to_pooled.is_none());
    }

    #[test]
    fn no_rounds_means_zero_gain() {
        let log = MetricsLog::new(vec![row(Phase::Baseline, 0, 0.5), row(Phase::Pooled, 0, 0.75)], 0);
        let s = summarize(&log).unwrap();
        assert_eq!(s.per_party_gain, vec![0.0]);
        assert_eq!(s.mean_gap_to_pooled, Some(0.25));
    }

    #[test]
    fn missing_baseline_is_data_error() {
        let log = MetricsLog::new(vec![row(Phase::Round(1), 0, 0.5)], 0);
        assert!(matches!(summarize(&log), Err(Error::Data(_))));
        assert!(summarize(&MetricsLog::default()).is_err());
    }
}
