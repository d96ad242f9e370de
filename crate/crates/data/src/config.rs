use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cifar::{load_cifar10, Normalization};
use crate::dataset::{subsample, Dataset};
use crate::synthetic::{synthetic_blobs, BlobsConfig};
use crate::Result;

/// Dataset selection as it appears in a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    Blobs(BlobsConfig),
    Cifar10 {
        dir: PathBuf,
        /// Stratified training subset size; the full split when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_samples: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_samples: Option<usize>,
        /// Fitted on the full training split when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalization: Option<Normalization>,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs(BlobsConfig::default())
    }
}

#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    /// The selection with every fitted constant filled in; loading it again
    /// gives the same data.
    pub resolved: DatasetConfig,
}

impl DatasetConfig {
    pub fn load(&self, seed: u64) -> Result<LoadedData> {
        match self {
            DatasetConfig::Blobs(cfg) => {
                let (train, test) = synthetic_blobs(cfg, seed)?;
                Ok(LoadedData {
                    train,
                    test,
                    resolved: self.clone(),
                })
            }
            DatasetConfig::Cifar10 {
                dir,
                train_samples,
                test_samples,
                normalization,
            } => {
                let (mut train, mut test, norm) = load_cifar10(dir, *normalization)?;
                if let Some(n) = *train_samples {
                    train = subsample(&train, n, seed)?;
                }
                if let Some(n) = *test_samples {
                    test = subsample(&test, n, seed ^ 0x7e57)?;
                }
                Ok(LoadedData {
                    train,
                    test,
                    resolved: DatasetConfig::Cifar10 {
                        dir: dir.clone(),
                        train_samples: *train_samples,
                        test_samples: *test_samples,
                        normalization: Some(norm),
                    },
                })
            }
        }
    }
}
