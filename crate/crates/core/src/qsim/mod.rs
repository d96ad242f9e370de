//! Exact statevector simulation of the layered U3/CU3 ansatz.
//!
//! Basis index `i` has qubit 0 as its least-significant bit. Each ansatz
//! layer applies a U3 on every qubit, then a CU3 chain on neighbouring pairs
//! with control `q` and target `q + 1`.

mod ansatz;
mod gate;
mod state;

pub use ansatz::{grad_ansatz, grad_ansatz_from_state, run_ansatz, AnsatzSpec, Gate, ThetaVector};
pub use gate::{u3_derivatives, u3_matrix, GateParams, Mat2, C64};
pub use state::{probabilities, sample_counts, sample_probabilities, Statevector};
