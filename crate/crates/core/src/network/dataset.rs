use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A classification dataset with features already normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub n_features: usize,
    pub n_classes: usize,
    /// Row-major `samples x n_features`.
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Short description of the normalization applied at ingest.
    pub norm: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Checks shapes, label range and split indices.
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() * self.n_features {
            return Err(Error::Dimension(format!(
                "{}: {} feature values for {} samples of {}",
                self.name,
                self.features.len(),
                self.labels.len(),
                self.n_features
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.n_classes) {
            return Err(Error::InvalidInput(format!(
                "{}: label {l} outside {} classes",
                self.name, self.n_classes
            )));
        }
        if self.train.iter().chain(&self.test).any(|&i| i >= self.len()) {
            return Err(Error::InvalidInput(format!("{}: split index out of range", self.name)));
        }
        Ok(())
    }

    /// Seeded shuffle of all samples; the last `test_len` become the test split.
    pub fn shuffle_split(&mut self, test_len: usize, seed: u64) -> Result<()> {
        if test_len == 0 || test_len >= self.len() {
            return Err(Error::Constraint(format!(
                "{}: test size {test_len} for {} samples",
                self.name,
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = self.len() - test_len;
        self.test = idx[cut..].to_vec();
        self.train = idx[..cut].to_vec();
        Ok(())
    }
}

/// Test size used for the UCI sets: a third of the samples, rounded.
pub fn uci_test_len(n: usize) -> usize {
    (n + 1) / 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uci_sizes() {
        assert_eq!(uci_test_len(150), 50);
        assert_eq!(uci_test_len(569), 190);
        assert_eq!(uci_test_len(8124), 2708);
    }

    #[test]
    fn split_is_seeded_partition() {
        let mut d = Dataset {
            name: "t".into(),
            n_features: 1,
            n_classes: 2,
            features: (0..30).map(|i| i as f64 / 30.0).collect(),
            labels: (0..30).map(|i| i % 2).collect(),
            train: vec![],
            test: vec![],
            norm: "none".into(),
        };
        d.shuffle_split(10, 3).unwrap();
        let first = (d.train.clone(), d.test.clone());
        d.shuffle_split(10, 3).unwrap();
        assert_eq!(first, (d.train.clone(), d.test.clone()));
        let mut all: Vec<usize> = d.train.iter().chain(&d.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        assert!(d.shuffle_split(30, 3).is_err());
        d.validate().unwrap();
    }
}
