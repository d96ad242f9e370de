use rand::seq::SliceRandom;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// An immutable labelled set with samples stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    sample_dims: Vec<usize>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        sample_dims: Vec<usize>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let d: usize = sample_dims.iter().product();
        if labels.is_empty() || d == 0 {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if inputs.len() != d * labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels need {} input values, got {}",
                labels.len(),
                d * labels.len(),
                inputs.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite input value".into()));
        }
        Ok(Dataset {
            inputs,
            sample_dims,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_dims(&self) -> &[usize] {
        &self.sample_dims
    }

    pub fn sample_len(&self) -> usize {
        self.sample_dims.iter().product()
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Copies the samples at `indices` (in that order) into fresh buffers.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut xs = Vec::with_capacity(indices.len() * self.sample_len());
        let mut ys = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.sample(i));
            ys.push(self.labels[i]);
        }
        (xs, ys)
    }

    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let (inputs, labels) = self.gather(indices);
        Dataset::new(
            inputs,
            self.sample_dims.clone(),
            labels,
            self.n_classes,
            self.split,
        )
    }

    /// Fraction of samples carrying the most frequent label.
    pub fn majority_rate(&self) -> f64 {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        *counts.iter().max().unwrap() as f64 / self.len() as f64
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Class-stratified random subset of `n` samples.
///
/// Per-class quotas are `n · count / size` rounded down, with leftover slots
/// going to the largest remainders (lowest class first on ties). The result
/// is shuffled.
pub fn subsample(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let size = dataset.len();
    if n == 0 || n > size {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {n} samples from a set of {size}"
        )));
    }
    let counts = dataset.class_counts();
    let mut quotas: Vec<usize> = counts.iter().map(|&c| c * n / size).collect();
    let mut leftover = n - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&c| std::cmp::Reverse((counts[c] * n) % size));
    for &c in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            leftover -= 1;
        }
    }

    let mut rng = crate::rng(seed, 0x5ab5);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut chosen = Vec::with_capacity(n);
    for (members, &quota) in by_class.iter_mut().zip(&quotas) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..quota]);
    }
    chosen.shuffle(&mut rng);
    dataset.select(&chosen)
}
