use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labelled samples: one feature row per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    name: String,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        let features = features.flatten_rows();
        if features.rows() != labels.len() {
            return Err(Error::shape("Dataset (rows vs labels)", features.rows(), labels.len()));
        }
        if num_classes == 0 {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Index {
                context: "Dataset label",
                index: bad,
                bound: num_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same features, new labels over a possibly different class count.
    pub fn relabel(&self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(self.features.clone(), labels, num_classes, self.name.clone())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.num_classes, self.name.clone())
    }

    /// Features and labels of the given rows, ready for a training step.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let features = self.features.select_rows(indices)?;
        Ok((features, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Concatenate datasets with the same feature width and class count.
    pub fn concat(parts: &[&Dataset], name: impl Into<String>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("cannot concatenate zero datasets".into()))?;
        let (dim, classes) = (first.feature_dim(), first.num_classes);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.feature_dim() != dim {
                return Err(Error::shape("Dataset::concat (feature dim)", dim, p.feature_dim()));
            }
            if p.num_classes != classes {
                return Err(Error::shape("Dataset::concat (classes)", classes, p.num_classes));
            }
            data.extend_from_slice(p.features.as_slice());
            labels.extend_from_slice(&p.labels);
        }
        Self::new(Tensor::matrix(labels.len(), dim, data)?, labels, classes, name)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }

    /// Indices of every sample, grouped by class, in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        Dataset::new(x, vec![0, 1, 1], 2, "tiny").unwrap()
    }

    #[test]
    fn validates_labels_and_rows() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(Dataset::new(x.clone(), vec![0], 2, "x").is_err());
        assert!(Dataset::new(x, vec![0, 2], 2, "x").is_err());
    }

    #[test]
    fn subset_concat_histogram() {
        let d = tiny();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.features().row(0), &[4.0, 5.0]);
        let c = Dataset::concat(&[&d, &s], "c").unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.class_histogram(), vec![2, 3]);
        assert_eq!(d.indices_by_class(), vec![vec![0], vec![1, 2]]);
    }
}
