//! Inference with exported target-network weights.
//!
//! Only the classical network and the dataset loaders are linked here. A run
//! configuration is read for its `seed`, `model` and `data` entries; every
//! other section is ignored.

use std::fs;
use std::path::{Path, PathBuf};

use fqt_data::{Dataset, DatasetConfig};
use fqt_nn::{evaluate, Batch, Evaluation, ModelPreset, ModelSpec, Shape};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Nn(#[from] fqt_nn::Error),
    #[error(transparent)]
    Data(#[from] fqt_data::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// The part of a run configuration that fixes the model and its data.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
pub struct InferConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelPreset,
    #[serde(default)]
    pub data: DatasetConfig,
}

impl InferConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config_err = |message: String| Error::Config {
            path: path.to_path_buf(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| config_err(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| config_err(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    #[default]
    Test,
}

/// Target network for a preset, sized to the dataset's samples and classes.
pub fn build_model(preset: &ModelPreset, data: &Dataset) -> Result<ModelSpec> {
    let input = Shape::from_dims(data.sample_dims())?;
    Ok(preset.build(input, data.n_classes())?)
}

pub fn infer(spec: &ModelSpec, omega: &[f64], data: &Dataset) -> Result<Evaluation> {
    let set = Batch {
        inputs: data.inputs(),
        labels: data.labels(),
    };
    Ok(evaluate(spec, omega, set)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferReport {
    pub m: usize,
    pub n_samples: usize,
    pub evaluation: Evaluation,
}

/// Loads the weights, checks them against the model size and scores the
/// chosen split.
pub fn infer_file(weights: &Path, config: &InferConfig, split: SplitChoice) -> Result<InferReport> {
    let loaded = config.data.load(config.seed)?;
    let data = match split {
        SplitChoice::Train => loaded.train,
        SplitChoice::Test => loaded.test,
    };
    let spec = build_model(&config.model, &data)?;
    let omega = fqt_nn::weights::load(weights, Some(spec.param_count()))?;
    Ok(InferReport {
        m: spec.param_count(),
        n_samples: data.len(),
        evaluation: infer(&spec, &omega, &data)?,
    })
}
