//! Seeded Gaussian-cluster generators used in place of image datasets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Radius of the hypersphere the cluster centres are placed on.
pub const CENTER_RADIUS: f64 = 4.0;

/// Fixed cluster centres; draws of any size can be taken from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobGenerator {
    centers: Vec<Vec<f64>>,
    spread: f64,
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

impl BlobGenerator {
    /// `classes` centres drawn uniformly on the sphere of radius [`CENTER_RADIUS`].
    pub fn new(classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "blob generator needs classes ≥ 1 and dim ≥ 1 (got {classes}, {dim})"
            )));
        }
        if !spread.is_finite() || spread <= 0.0 {
            return Err(Error::Config(format!("spread must be positive and finite, got {spread}")));
        }
        let mut rng = rng::stream(seed, &[0xce47e5]);
        let centers = (0..classes)
            .map(|_| loop {
                let v = gaussian_vec(dim, &mut rng);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm * CENTER_RADIUS).collect();
                }
            })
            .collect();
        Ok(Self { centers, spread })
    }

    /// Like [`BlobGenerator::new`], but the centres are mutually orthogonal
    /// (Gram–Schmidt on the same random draws), so every pair of clusters is
    /// equally far apart. Needs `classes ≤ dim`.
    pub fn orthogonal(classes: usize, dim: usize, spread: f64, seed: u64) -> Result<Self> {
        if classes > dim {
            return Err(Error::Config(format!(
                "{classes} orthogonal centres do not fit in {dim} dimensions"
            )));
        }
        let mut g = Self::new(classes, dim, spread, seed)?;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
        for c in &g.centers {
            let mut v = c.clone();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err(Error::Data("degenerate centre draw".into()));
            }
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
        g.centers = basis
            .into_iter()
            .map(|b| b.into_iter().map(|x| x * CENTER_RADIUS).collect())
            .collect();
        Ok(g)
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `per_class` points around every centre, class-major order.
    pub fn sample(&self, per_class: usize, seed: u64, name: &str) -> Result<Dataset> {
        let mut rng = rng::stream(seed, &[0x5a3b1e]);
        let dim = self.dim();
        let mut data = Vec::with_capacity(self.classes() * per_class * dim);
        let mut labels = Vec::with_capacity(self.classes() * per_class);
        for (label, center) in self.centers.iter().enumerate() {
            for _ in 0..per_class {
                let noise = gaussian_vec(dim, &mut rng);
                data.extend(center.iter().zip(noise).map(|(c, z)| (c + self.spread * z) as f32));
                labels.push(label);
            }
        }
        Dataset::new(Tensor::matrix(labels.len(), dim, data)?, labels, self.classes(), name)
    }
}

/// `classes` Gaussian clusters of `per_class` points each, fully determined by `seed`.
pub fn synth_blobs(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    BlobGenerator::new(classes, dim, spread, seed)?.sample(per_class, seed, "blobs")
}

/// A labelled public task over the same inputs as a private domain.
///
/// Inputs are `d + σ·ε` with `d` a randomly chosen domain centre, `σ` the
/// public generator's spread and `ε` standard normal, so the public set
/// covers every region where private classes live. The label is the index of
/// the public centre with the largest inner product with the input: a
/// different, learnable task on the same input distribution.
pub fn synth_public(domain: &BlobGenerator, public: &BlobGenerator, total: usize, seed: u64) -> Result<Dataset> {
    if domain.dim() != public.dim() {
        return Err(Error::shape("synth_public (dim)", domain.dim(), public.dim()));
    }
    let mut rng = rng::stream(seed, &[0x9ab11c]);
    let dim = domain.dim();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let d = &domain.centers()[rng.random_range(0..domain.classes())];
        let noise = gaussian_vec(dim, &mut rng);
        let x: Vec<f64> = d.iter().zip(noise).map(|(c, z)| c + public.spread() * z).collect();
        let score = |p: &Vec<f64>| p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let label = (0..public.classes())
            .max_by(|&a, &b| score(&public.centers()[a]).total_cmp(&score(&public.centers()[b])).then(b.cmp(&a)))
            .expect("at least one public class");
        data.extend(x.iter().map(|&v| v as f32));
        labels.push(label);
    }
    Dataset::new(Tensor::matrix(total, dim, data)?, labels, public.classes(), "public")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_labels() {
        let d = synth_blobs(2, 1, 2, 0.5, 3).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.feature_dim(), 2);
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_blobs(3, 4, 5, 1.0, 9).unwrap(), synth_blobs(3, 4, 5, 1.0, 9).unwrap());
        assert_ne!(synth_blobs(3, 4, 5, 1.0, 9).unwrap(), synth_blobs(3, 4, 5, 1.0, 10).unwrap());
    }

    #[test]
    fn centers_lie_on_sphere() {
        let g = BlobGenerator::new(5, 7, 1.0, 1).unwrap();
        for c in g.centers() {
            let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - CENTER_RADIUS).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synth_blobs(0, 1, 2, 1.0, 0).is_err());
        assert!(synth_blobs(2, 0, 2, 1.0, 0).is_err());
        assert!(synth_blobs(2, 1, 0, 1.0, 0).is_err());
        assert!(synth_blobs(2, 1, 2, 0.0, 0).is_err());
    }

    #[test]
    fn orthogonal_centres() {
        let g = BlobGenerator::orthogonal(4, 6, 1.0, 3).unwrap();
        for (i, a) in g.centers().iter().enumerate() {
            for (j, b) in g.centers().iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expected = if i == j { CENTER_RADIUS * CENTER_RADIUS } else { 0.0 };
                assert!((dot - expected).abs() < 1e-9, "{i},{j}: {dot}");
            }
        }
        assert!(BlobGenerator::orthogonal(7, 6, 1.0, 3).is_err());
    }

    #[test]
    fn public_label_is_best_aligned_centre() {
        let domain = BlobGenerator::new(4, 6, 1.0, 1).unwrap();
        let public = BlobGenerator::new(3, 6, 1.0, 2).unwrap();
        let d = synth_public(&domain, &public, 50, 5).unwrap();
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d, synth_public(&domain, &public, 50, 5).unwrap());
        for i in 0..d.len() {
            let x = d.features().row(i);
            let dots: Vec<f64> = public
                .centers()
                .iter()
                .map(|c| c.iter().zip(x).map(|(a, &b)| a * b as f64).sum())
                .collect();
            let best = (0..3).fold(0, |b, k| if dots[k] > dots[b] { k } else { b });
            assert_eq!(d.labels()[i], best);
        }
    }
}
