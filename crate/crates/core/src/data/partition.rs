//! Private-set partitioners for the i.i.d. and subclass/superclass regimes.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Iid,
    Noniid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub parties: usize,
    pub samples_per_class: usize,
    /// Superclass of every subclass label; required in non-i.i.d. mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclass_to_superclass: Option<Vec<usize>>,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn iid(parties: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Iid,
            parties,
            samples_per_class,
            subclass_to_superclass: None,
            seed,
        }
    }

    pub fn noniid(parties: usize, samples_per_class: usize, map: Vec<usize>, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Noniid,
            parties,
            samples_per_class,
            subclass_to_superclass: Some(map),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.parties == 0 {
            return Err(Error::Config("partition needs at least one party".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be at least 1".into()));
        }
        Ok(())
    }
}

/// Private sets plus whatever the partitioner did not hand out.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub parties: Vec<Dataset>,
    /// Source row of every private sample, per party.
    pub party_indices: Vec<Vec<usize>>,
    pub remainder: Dataset,
    pub remainder_indices: Vec<usize>,
}

/// Non-i.i.d. split; private labels are superclass indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NoniidPartition {
    pub partition: Partition,
    /// `assigned[k][s]` is the subclass party `k` holds for superclass `s`.
    pub assigned: Vec<Vec<usize>>,
    pub num_superclasses: usize,
}

fn finish(source: &Dataset, mut party_indices: Vec<Vec<usize>>, labels: Option<&[usize]>, classes: usize) -> Result<Partition> {
    let mut used = vec![false; source.len()];
    let mut parties = Vec::with_capacity(party_indices.len());
    for (k, idx) in party_indices.iter_mut().enumerate() {
        idx.sort_unstable();
        for &i in idx.iter() {
            used[i] = true;
        }
        let mut part = source.subset(idx)?;
        if let Some(map) = labels {
            part = part.relabel(part.labels().iter().map(|&l| map[l]).collect(), classes)?;
        }
        parties.push(part.with_name(format!("private-{k}")));
    }
    let remainder_indices: Vec<usize> = (0..source.len()).filter(|&i| !used[i]).collect();
    let remainder = source.subset(&remainder_indices)?.with_name("remainder");
    Ok(Partition {
        parties,
        party_indices,
        remainder,
        remainder_indices,
    })
}

/// Exactly `samples_per_class` samples of every class per party, without replacement.
pub fn partition_iid(source: &Dataset, plan: &PartitionPlan) -> Result<Partition> {
    plan.validate()?;
    let (m, n) = (plan.parties, plan.samples_per_class);
    let mut rng = rng::stream(plan.seed, &[rng::Stream::Partition as u64, 0]);
    let mut party_indices = vec![Vec::with_capacity(n * source.num_classes()); m];
    for (class, mut members) in source.indices_by_class().into_iter().enumerate() {
        if members.len() < m * n {
            return Err(Error::Config(format!(
                "class {class} has {} samples but {m} parties × {n} per class need {}",
                members.len(),
                m * n
            )));
        }
        members.shuffle(&mut rng);
        for (k, chunk) in members.chunks(n).take(m).enumerate() {
            party_indices[k].extend_from_slice(chunk);
        }
    }
    finish(source, party_indices, None, source.num_classes())
}

/// One subclass per superclass per party; party `k` receives subclass
/// `(k + offset_s) mod |subclasses of s|` with a seeded per-superclass offset.
pub fn partition_noniid(source: &Dataset, plan: &PartitionPlan) -> Result<NoniidPartition> {
    plan.validate()?;
    let map = plan
        .subclass_to_superclass
        .as_ref()
        .ok_or_else(|| Error::Config("non-i.i.d. partition needs subclass_to_superclass".into()))?;
    if map.len() < source.num_classes() {
        return Err(Error::Config(format!(
            "subclass_to_superclass covers {} subclasses, source has {}",
            map.len(),
            source.num_classes()
        )));
    }
    let supers = map.iter().max().map_or(0, |s| s + 1);
    let mut members_of: Vec<Vec<usize>> = vec![Vec::new(); supers];
    for (sub, &sup) in map.iter().enumerate().take(source.num_classes()) {
        members_of[sup].push(sub);
    }
    let (m, n) = (plan.parties, plan.samples_per_class);
    let mut rng = rng::stream(plan.seed, &[rng::Stream::Partition as u64, 1]);
    let mut assigned = vec![vec![0usize; supers]; m];
    for (sup, subs) in members_of.iter().enumerate() {
        if subs.len() < m {
            return Err(Error::Config(format!(
                "superclass {sup} has {} subclasses, fewer than the {m} parties",
                subs.len()
            )));
        }
        let offset = rng.random_range(0..subs.len());
        for (k, row) in assigned.iter_mut().enumerate() {
            row[sup] = subs[(k + offset) % subs.len()];
        }
    }

    let by_class = source.indices_by_class();
    let mut party_indices = vec![Vec::new(); m];
    for (k, row) in assigned.iter().enumerate() {
        for &sub in row {
            let mut members = by_class[sub].clone();
            if members.len() < n {
                return Err(Error::Config(format!(
                    "subclass {sub} has {} samples, party {k} needs {n}",
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            party_indices[k].extend_from_slice(&members[..n]);
        }
    }
    let partition = finish(source, party_indices, Some(map), supers)?;
    Ok(NoniidPartition {
        partition,
        assigned,
        num_superclasses: supers,
    })
}

/// Relabel a subclass-labelled dataset with superclass labels.
pub fn to_superclasses(source: &Dataset, map: &[usize]) -> Result<Dataset> {
    let supers = map.iter().max().map_or(0, |s| s + 1);
    let labels = source
        .labels()
        .iter()
        .map(|&l| {
            map.get(l).copied().ok_or(Error::Index {
                context: "subclass_to_superclass",
                index: l,
                bound: map.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    source.relabel(labels, supers)
}
