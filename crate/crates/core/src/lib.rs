//! Quantum-circuit-generated weights trained under federated averaging.
//!
//! * [`qsim`] simulates the layered U3/CU3 ansatz exactly and differentiates
//!   its basis probabilities with an adjoint sweep.
//! * [`qtgen`] turns those probabilities into the weights of a classical
//!   target network, one chunk of `n_mlp` weights per basis state.
//! * [`fed`] trains the generator parameters across clients and averages
//!   them at a central node.
//!
//! The generated weights are plain `f64` vectors consumed by `fqt-nn`, so a
//! trained target network runs without any of this crate.

pub mod fed;
pub mod qsim;
pub mod qtgen;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("invalid qubit pair: control {control} equals target {target}")]
    InvalidPair { control: usize, target: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Nn(#[from] fqt_nn::Error),
    #[error(transparent)]
    Data(#[from] fqt_data::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Seeded ChaCha stream; distinct `stream` ids give independent sequences.
pub fn seeded_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
