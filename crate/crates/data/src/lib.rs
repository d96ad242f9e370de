//! Datasets for desk-scale and CIFAR-10 experiments.

pub mod cifar;
mod config;
mod dataset;
pub mod synthetic;

pub use cifar::{load_cifar10, CifarRecord, Normalization};
pub use config::{DatasetConfig, LoadedData};
pub use dataset::{subsample, Dataset, Split};
pub use synthetic::{synthetic_blobs, BlobsConfig};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Per-purpose RNG for a run seed, so independent consumers never share a
/// stream.
pub(crate) fn rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
