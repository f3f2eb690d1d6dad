use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::PartitionMode;
use crate::error::{Error, Result};
use crate::protocol::CollaborationConfig;

/// Hidden-layer widths cycled through when no architecture list is given.
pub const DEFAULT_ARCHITECTURES: [&[usize]; 10] = [
    &[32],
    &[64],
    &[32, 32],
    &[64, 32],
    &[128],
    &[48, 48],
    &[96],
    &[64, 64],
    &[32, 64],
    &[96, 32],
];

/// Digest epochs of the built-in experiment. With a 512-row subset and
/// 256-row batches a single epoch is only two optimizer steps, too few for
/// the consensus to register at this scale.
pub const CANONICAL_DIGEST_EPOCHS: usize = 20;

/// Synthetic Gaussian-cluster data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Private-domain clusters (subclasses in non-i.i.d. mode).
    pub classes: usize,
    pub dim: usize,
    pub spread: f64,
    /// Samples per cluster in the pool private sets are drawn from.
    pub pool_per_class: usize,
    pub test_per_class: usize,
    pub public_size: usize,
    pub public_classes: usize,
    pub public_spread: f64,
    /// Place the private-domain centres on mutually orthogonal axes.
    pub orthogonal_centers: bool,
    /// Seed for every data draw; the collaboration seed when absent.
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            dim: 16,
            spread: 1.0,
            pool_per_class: 100,
            test_per_class: 200,
            public_size: 3000,
            public_classes: 6,
            public_spread: 1.0,
            orthogonal_centers: false,
            seed: None,
        }
    }
}

/// IDX files; private and test labels may be shifted past the public classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub public_images: PathBuf,
    pub public_labels: PathBuf,
    pub private_images: PathBuf,
    pub private_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default)]
    pub private_label_offset: usize,
    /// Output width of every network; inferred from the labels when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    Synthetic(SyntheticSpec),
    Idx(IdxSpec),
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub samples_per_class: usize,
    pub subclass_to_superclass: Option<Vec<usize>>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            mode: PartitionMode::Iid,
            samples_per_class: 3,
            subclass_to_superclass: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `metrics.csv` and `summary.json`; nothing is written when absent.
    pub dir: Option<PathBuf>,
}

/// A complete, self-describing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub collaboration: CollaborationConfig,
    pub data: DataSpec,
    pub partition: PartitionSpec,
    /// Hidden widths per party; defaults cycle through [`DEFAULT_ARCHITECTURES`].
    pub architectures: Option<Vec<Vec<usize>>>,
    /// Also train the pooled-private-data upper bound.
    pub pooled: bool,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "blobs-10".into(),
            collaboration: CollaborationConfig {
                subset_size: 512,
                digest_epochs: CANONICAL_DIGEST_EPOCHS,
                ..CollaborationConfig::default()
            },
            data: DataSpec::default(),
            partition: PartitionSpec::default(),
            architectures: None,
            pooled: true,
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn architectures(&self) -> Vec<Vec<usize>> {
        match &self.architectures {
            Some(a) => a.clone(),
            None => (0..self.collaboration.parties)
                .map(|k| DEFAULT_ARCHITECTURES[k % DEFAULT_ARCHITECTURES.len()].to_vec())
                .collect(),
        }
    }

    pub fn data_seed(&self) -> u64 {
        match &self.data {
            DataSpec::Synthetic(s) => s.seed.unwrap_or(self.collaboration.seed),
            DataSpec::Idx(_) => self.collaboration.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.collaboration.validate()?;
        let archs = self.architectures();
        if archs.len() != self.collaboration.parties {
            return Err(Error::Config(format!(
                "architectures: {} entries for {} parties",
                archs.len(),
                self.collaboration.parties
            )));
        }
        if let Some((k, _)) = archs.iter().enumerate().find(|(_, a)| a.contains(&0)) {
            return Err(Error::Config(format!("architectures[{k}]: hidden widths must be positive")));
        }
        if self.partition.samples_per_class == 0 {
            return Err(Error::Config("partition.samples_per_class: must be at least 1".into()));
        }
        if self.partition.mode == PartitionMode::Noniid && self.partition.subclass_to_superclass.is_none() {
            return Err(Error::Config("partition.subclass_to_superclass: required in noniid mode".into()));
        }
        if let DataSpec::Synthetic(s) = &self.data {
            let positive = [
                ("classes", s.classes),
                ("dim", s.dim),
                ("pool_per_class", s.pool_per_class),
                ("test_per_class", s.test_per_class),
                ("public_size", s.public_size),
                ("public_classes", s.public_classes),
            ];
            if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
                return Err(Error::Config(format!("data.{key}: must be at least 1")));
            }
            for (key, v) in [("spread", s.spread), ("public_spread", s.public_spread)] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Config(format!("data.{key}: must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Parse a TOML document, apply `key=value` overrides and validate.
    ///
    /// Override keys are dotted paths (`collaboration.rounds=3`); a bare key
    /// that is not a top-level field is looked up under `collaboration`.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config document: {}", e.message())))?;
        // Layer the document over the built-in experiment so that a partial
        // `[collaboration]` section keeps the experiment-level defaults.
        let mut doc = toml::Table::try_from(Self::default())
            .map_err(|e| Error::Config(format!("cannot serialise defaults: {e}")))?;
        merge(&mut doc, user);
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: Self = doc
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        // A different data source replaces the synthetic defaults wholesale.
        let replaces_data = key == "data"
            && value.get("kind").and_then(|k| k.as_str()).is_some_and(|k| k != "synthetic");
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !replaces_data => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

const TOP_LEVEL_KEYS: [&str; 7] = ["name", "collaboration", "data", "partition", "architectures", "pooled", "output"];

fn apply_override(doc: &mut toml::Table, raw: &str) -> Result<()> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{raw}' must look like key=value")))?;
    let key = key.trim();
    let path: Vec<&str> = if key.contains('.') || TOP_LEVEL_KEYS.contains(&key) {
        key.split('.').collect()
    } else {
        vec!["collaboration", key]
    };
    let value = value.trim();
    let parsed: toml::Value = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));

    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut table = doc;
    for part in parents {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a section")))?;
    }
    table.insert(last.to_string(), parsed);
    Ok(())
}
