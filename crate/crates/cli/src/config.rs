//! Run configuration: a TOML document with one table per subsystem.

use std::path::PathBuf;

use anyhow::{bail, Context};
use fqt_core::fed::{Aggregation, FederatedConfig, QtSetup};
use fqt_data::DatasetConfig;
use fqt_nn::{ModelPreset, ModelSpec, Shape};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ansatz: AnsatzSection,
    #[serde(default)]
    pub mapping: MappingSection,
    #[serde(default)]
    pub model: ModelPreset,
    #[serde(default)]
    pub data: DatasetConfig,
    #[serde(default)]
    pub federated: FederatedSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: default_output_dir(),
            ansatz: AnsatzSection::default(),
            mapping: MappingSection::default(),
            model: ModelPreset::default(),
            data: DatasetConfig::default(),
            federated: FederatedSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSection {
    pub n_layers: usize,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        AnsatzSection { n_layers: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingSection {
    pub n_mlp: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

pub fn default_hidden() -> Vec<usize> {
    fqt_core::qtgen::DEFAULT_MAPPING_HIDDEN.to_vec()
}

impl Default for MappingSection {
    fn default() -> Self {
        MappingSection {
            n_mlp: 16,
            hidden: default_hidden(),
        }
    }
}

/// Federated knobs; the seed comes from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedSection {
    pub n_clients: usize,
    pub n_rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Default for FederatedSection {
    fn default() -> Self {
        let d = FederatedConfig::default();
        FederatedSection {
            n_clients: d.n_clients,
            n_rounds: d.n_rounds,
            local_epochs: d.local_epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            aggregation: d.aggregation,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Every field written out, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn federated(&self) -> FederatedConfig {
        let f = &self.federated;
        FederatedConfig {
            n_clients: f.n_clients,
            n_rounds: f.n_rounds,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            learning_rate: f.learning_rate,
            seed: self.seed,
            aggregation: f.aggregation,
        }
    }

    /// Sample shape and class count implied by the dataset selection.
    pub fn sample_shape(&self) -> (Shape, usize) {
        match &self.data {
            DatasetConfig::Blobs(b) => (Shape::Flat(b.input_dim), b.n_classes),
            DatasetConfig::Cifar10 { .. } => (
                Shape::Image {
                    channels: 3,
                    height: 32,
                    width: 32,
                },
                10,
            ),
        }
    }

    pub fn target(&self) -> anyhow::Result<ModelSpec> {
        let (shape, classes) = self.sample_shape();
        self.model
            .build(shape, classes)
            .context("model does not fit the dataset")
    }

    pub fn setup(&self) -> anyhow::Result<QtSetup> {
        Ok(QtSetup::new(
            self.target()?,
            self.mapping.n_mlp,
            self.ansatz.n_layers,
            self.mapping.hidden.clone(),
        )?)
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.federated().validate()?;
        if let DatasetConfig::Blobs(b) = &self.data {
            b.validate()?;
            let n_train = b.n_classes * (b.n_per_class - b.n_per_class / 5);
            if self.federated.n_clients > n_train {
                bail!(
                    "{} clients but only {n_train} training samples",
                    self.federated.n_clients
                );
            }
        }
        self.setup()?;
        Ok(())
    }
}
