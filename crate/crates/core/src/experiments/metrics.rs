//! Per-round, per-party metrics and their CSV form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{PartyMetrics, Phase};

pub const CSV_HEADER: &str = "round,party,accuracy,digest_loss,revisit_loss,wall_ms";

/// Provenance attached to a log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<PartyMetrics>,
    pub meta: RunMetadata,
}

impl MetricsLog {
    pub fn new(rows: Vec<PartyMetrics>, seed: u64) -> Self {
        Self {
            rows,
            meta: RunMetadata {
                seed,
                version: crate::VERSION.to_string(),
                ..RunMetadata::default()
            },
        }
    }

    /// Check accuracies lie in `[0, 1]` and each party has one baseline and
    /// at most one pooled row.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashMap::new();
        for row in &self.rows {
            if !(0.0..=1.0).contains(&row.accuracy) {
                return Err(Error::Data(format!("accuracy {} out of [0, 1]", row.accuracy)));
            }
            if matches!(row.phase, Phase::Baseline | Phase::Pooled) {
                let count = seen.entry((row.party, row.phase)).or_insert(0);
                *count += 1;
                if *count > 1 {
                    return Err(Error::Data(format!("party {} has two {:?} rows", row.party, row.phase)));
                }
            }
        }
        Ok(())
    }

    pub fn parties(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.rows.iter().map(|r| r.party).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn row(&self, phase: Phase, party: usize) -> Option<&PartyMetrics> {
        self.rows.iter().find(|r| r.phase == phase && r.party == party)
    }

    /// Highest collaboration round present, if any.
    pub fn last_round(&self) -> Option<usize> {
        self.rows
            .iter()
            .filter_map(|r| match r.phase {
                Phase::Round(j) => Some(j),
                _ => None,
            })
            .max()
    }

    /// Equality ignoring wall-clock time and metadata.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len() && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_outcome(b))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let round = match r.phase {
                Phase::Baseline => "baseline".to_string(),
                Phase::Pooled => "pooled".to_string(),
                Phase::Round(j) => j.to_string(),
            };
            out.push_str(&format!(
                "{round},{},{},{},{},{}\n",
                r.party,
                r.accuracy,
                opt(r.digest_loss),
                opt(r.revisit_loss),
                r.wall_ms
            ));
        }
        out
    }

    /// Parse rows written by [`MetricsLog::to_csv`]; metadata is left empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == CSV_HEADER => {}
            other => return Err(Error::Data(format!("unexpected CSV header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let line_no = n + 2;
            let bad = |what: &str| Error::Data(format!("CSV line {line_no}: invalid {what}"));
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Data(format!("CSV line {line_no}: expected 6 fields, got {}", fields.len())));
            }
            let phase = match fields[0] {
                "baseline" => Phase::Baseline,
                "pooled" => Phase::Pooled,
                j => Phase::Round(j.parse().map_err(|_| bad("round"))?),
            };
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(what))
                }
            };
            rows.push(PartyMetrics {
                phase,
                party: fields[1].parse().map_err(|_| bad("party"))?,
                accuracy: fields[2].parse().map_err(|_| bad("accuracy"))?,
                digest_loss: opt(fields[3], "digest_loss")?,
                revisit_loss: opt(fields[4], "revisit_loss")?,
                wall_ms: fields[5].parse().map_err(|_| bad("wall_ms"))?,
            });
        }
        let log = Self {
            rows,
            meta: RunMetadata::default(),
        };
        log.validate()?;
        Ok(log)
    }

    /// CSV with the wall-time column blanked, for byte-level comparisons.
    pub fn to_csv_without_wall_time(&self) -> String {
        let mut copy = self.clone();
        copy.rows.iter_mut().for_each(|r| r.wall_ms = 0);
        copy.to_csv()
    }
}
