//! Gaussian class clusters for desk-scale experiments.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsConfig {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub input_dim: usize,
    /// Distance between every pair of class means, in units of the
    /// per-coordinate standard deviation (which is 1).
    pub separation: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        BlobsConfig {
            n_classes: 3,
            n_per_class: 200,
            input_dim: 32,
            separation: 5.0,
        }
    }
}

impl BlobsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.input_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "blobs need ≥ 2 classes and a positive dimension, got {self:?}"
            )));
        }
        if self.n_classes > self.input_dim {
            return Err(Error::InvalidArgument(format!(
                "{} equidistant class means do not fit in {} dimensions",
                self.n_classes, self.input_dim
            )));
        }
        if self.n_per_class < 5 {
            return Err(Error::InvalidArgument(format!(
                "n_per_class = {} leaves no test samples after the 80/20 split",
                self.n_per_class
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "separation must be finite and ≥ 0, got {}",
                self.separation
            )));
        }
        Ok(())
    }

    /// Mean of class `c`: `separation / √2` along axis `c`, so all pairs are
    /// exactly `separation` apart.
    pub fn class_mean(&self, c: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.input_dim];
        mean[c] = self.separation / std::f64::consts::SQRT_2;
        mean
    }
}

/// Draws isotropic unit-variance clusters and splits each class 80/20 into
/// train and test. Both splits are shuffled.
pub fn synthetic_blobs(cfg: &BlobsConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = crate::rng(seed, 0xb10b);
    let n_test = cfg.n_per_class / 5;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..cfg.n_classes {
        let mean = cfg.class_mean(c);
        for k in 0..cfg.n_per_class {
            let x: Vec<f64> = mean
                .iter()
                .map(|m| {
                    m + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                })
                .collect();
            if k < n_test {
                test.push((x, c));
            } else {
                train.push((x, c));
            }
        }
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let build = |rows: Vec<(Vec<f64>, usize)>, split| {
        let labels = rows.iter().map(|r| r.1).collect();
        let inputs = rows.into_iter().flat_map(|r| r.0).collect();
        Dataset::new(inputs, vec![cfg.input_dim], labels, cfg.n_classes, split)
    };
    Ok((build(train, Split::Train)?, build(test, Split::Test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Classifies by the closest empirical training centroid.
    fn nearest_centroid_accuracy(train: &Dataset, test: &Dataset) -> f64 {
        let d = train.sample_len();
        let k = train.n_classes();
        let mut centroids = vec![vec![0.0; d]; k];
        let counts = train.class_counts();
        for i in 0..train.len() {
            let c = train.labels()[i];
            for (a, x) in centroids[c].iter_mut().zip(train.sample(i)) {
                *a += x / counts[c] as f64;
            }
        }
        let hits = (0..test.len())
            .filter(|&i| {
                let x = test.sample(i);
                let best = (0..k)
                    .min_by(|&a, &b| {
                        let da: f64 = centroids[a]
                            .iter()
                            .zip(x)
                            .map(|(m, v)| (m - v).powi(2))
                            .sum();
                        let db: f64 = centroids[b]
                            .iter()
                            .zip(x)
                            .map(|(m, v)| (m - v).powi(2))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                best == test.labels()[i]
            })
            .count();
        hits as f64 / test.len() as f64
    }

    #[test]
    fn split_sizes_and_balance() {
        let cfg = BlobsConfig::default();
        let (train, test) = synthetic_blobs(&cfg, 1).unwrap();
        assert_eq!(train.len(), 480);
        assert_eq!(test.len(), 120);
        assert_eq!(test.class_counts(), vec![40; 3]);
        assert_eq!(train.sample_dims(), &[32]);
    }

    #[test]
    fn means_are_pairwise_separated() {
        let cfg = BlobsConfig {
            separation: 4.0,
            ..Default::default()
        };
        for a in 0..3 {
            for b in a + 1..3 {
                let d: f64 = cfg
                    .class_mean(a)
                    .iter()
                    .zip(cfg.class_mean(b))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d - 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = BlobsConfig::default();
        assert_eq!(
            synthetic_blobs(&cfg, 9).unwrap(),
            synthetic_blobs(&cfg, 9).unwrap()
        );
        assert_ne!(
            synthetic_blobs(&cfg, 9).unwrap().0,
            synthetic_blobs(&cfg, 10).unwrap().0
        );
    }

    #[test]
    fn wide_separation_is_centroid_separable() {
        let cfg = BlobsConfig {
            separation: 12.0,
            ..Default::default()
        };
        let (train, test) = synthetic_blobs(&cfg, 2).unwrap();
        assert!(nearest_centroid_accuracy(&train, &test) >= 0.99);
    }

    #[test]
    fn zero_separation_is_near_chance() {
        let cfg = BlobsConfig {
            n_classes: 2,
            n_per_class: 2000,
            input_dim: 4,
            separation: 0.0,
        };
        let (train, test) = synthetic_blobs(&cfg, 4).unwrap();
        let acc = nearest_centroid_accuracy(&train, &test);
        assert!((acc - 0.5).abs() < 0.06, "{acc}");
    }

    #[test]
    fn invalid_sizes_rejected() {
        for cfg in [
            BlobsConfig {
                n_classes: 1,
                ..Default::default()
            },
            BlobsConfig {
                n_per_class: 4,
                ..Default::default()
            },
            BlobsConfig {
                input_dim: 2,
                ..Default::default()
            },
            BlobsConfig {
                separation: -1.0,
                ..Default::default()
            },
        ] {
            assert!(synthetic_blobs(&cfg, 0).is_err());
        }
    }
}
