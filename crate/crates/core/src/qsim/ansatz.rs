use std::f64::consts::PI;

use rand::Rng;

use super::gate::{adjoint, u3_derivatives, u3_matrix, GateParams, Mat2, C64};
use super::state::{Statevector, MAX_QUBITS};
use crate::{Error, Result};

/// Register width and layer count of the ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnsatzSpec {
    n_qubits: usize,
    n_layers: usize,
}

/// One gate of the ansatz together with the offset of its angle triple in θ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    U3 {
        qubit: usize,
        offset: usize,
    },
    Cu3 {
        control: usize,
        target: usize,
        offset: usize,
    },
}

impl Gate {
    pub fn offset(&self) -> usize {
        match *self {
            Gate::U3 { offset, .. } | Gate::Cu3 { offset, .. } => offset,
        }
    }

    fn target_control(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::U3 { qubit, .. } => (qubit, None),
            Gate::Cu3 {
                control, target, ..
            } => (target, Some(control)),
        }
    }
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS || n_layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "ansatz needs 1..={MAX_QUBITS} qubits and ≥ 1 layer, got N = {n_qubits}, L = {n_layers}"
            )));
        }
        Ok(AnsatzSpec { n_qubits, n_layers })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    /// `3N` single-qubit angles plus `3(N − 1)` controlled angles.
    pub fn params_per_layer(&self) -> usize {
        6 * self.n_qubits - 3
    }

    pub fn param_count(&self) -> usize {
        self.n_layers * self.params_per_layer()
    }

    /// Gates in application order.
    pub fn gates(&self) -> impl Iterator<Item = Gate> + '_ {
        let n = self.n_qubits;
        (0..self.n_layers).flat_map(move |l| {
            let base = l * self.params_per_layer();
            let singles = (0..n).map(move |q| Gate::U3 {
                qubit: q,
                offset: base + 3 * q,
            });
            let pairs = (0..n - 1).map(move |q| Gate::Cu3 {
                control: q,
                target: q + 1,
                offset: base + 3 * n + 3 * q,
            });
            singles.chain(pairs)
        })
    }
}

/// Flattened ansatz angles: layer by layer, the `N` U3 triples (qubit 0
/// first) followed by the `N − 1` CU3 triples (pair (0, 1) first), each
/// ordered `(μ, φ, λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(spec: &AnsatzSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "θ has length {}, ansatz (N = {}, L = {}) needs {}",
                values.len(),
                spec.n_qubits,
                spec.n_layers,
                spec.param_count()
            )));
        }
        Ok(ThetaVector(values))
    }

    /// Angles drawn uniformly from [−π, π].
    pub fn random<R: Rng + ?Sized>(spec: &AnsatzSpec, rng: &mut R) -> Self {
        ThetaVector(
            (0..spec.param_count())
                .map(|_| rng.random_range(-PI..=PI))
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.0.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "θ has length {}, ansatz needs {}",
                self.0.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }

    fn gate_params(&self, gate: &Gate) -> GateParams {
        GateParams::from_slice(&self.0[gate.offset()..gate.offset() + 3])
    }
}

/// Prepares `|ψ(θ)⟩` from `|0…0⟩`.
pub fn run_ansatz(spec: &AnsatzSpec, theta: &ThetaVector) -> Result<Statevector> {
    theta.check(spec)?;
    let mut state = Statevector::zero(spec.n_qubits)?;
    for gate in spec.gates() {
        let m = u3_matrix(theta.gate_params(&gate))?;
        let (target, control) = gate.target_control();
        state.apply_matrix(&m, target, control);
    }
    Ok(state)
}

/// Gradient of `Σᵢ dl_dp[i] · pᵢ(θ)` with respect to θ.
pub fn grad_ansatz(spec: &AnsatzSpec, theta: &ThetaVector, dl_dp: &[f64]) -> Result<Vec<f64>> {
    let state = run_ansatz(spec, theta)?;
    grad_ansatz_from_state(spec, theta, &state, dl_dp)
}

/// Adjoint sweep starting from an already prepared `|ψ(θ)⟩`.
///
/// With `C = diag(dl_dp)`, the derivative for gate `k` is
/// `2 Re ⟨λₖ| ∂Gₖ |ψₖ₋₁⟩`, where `ψₖ₋₁` is the state entering the gate and
/// `λₖ` is `C|ψ⟩` pulled back through the gates after it. Both vectors are
/// recovered by un-applying gates from the end, so the sweep needs two
/// state-sized buffers and no stored intermediates.
pub fn grad_ansatz_from_state(
    spec: &AnsatzSpec,
    theta: &ThetaVector,
    state: &Statevector,
    dl_dp: &[f64],
) -> Result<Vec<f64>> {
    theta.check(spec)?;
    let dim = 1usize << spec.n_qubits;
    if state.n_qubits() != spec.n_qubits || dl_dp.len() != dim {
        return Err(Error::Shape(format!(
            "expected a {}-qubit state and {dim} probability weights, got {} qubits and {} weights",
            spec.n_qubits,
            state.n_qubits(),
            dl_dp.len()
        )));
    }
    let mut grad = vec![0.0; spec.param_count()];
    if dl_dp.iter().all(|&c| c == 0.0) {
        return Ok(grad);
    }
    let mut psi = state.clone();
    let mut lam = state.clone();
    for (a, &c) in lam.amps_mut().iter_mut().zip(dl_dp) {
        *a *= c;
    }
    let gates: Vec<Gate> = spec.gates().collect();
    for gate in gates.iter().rev() {
        let p = theta.gate_params(gate);
        let m = u3_matrix(p)?;
        let m_dag = adjoint(&m);
        let (target, control) = gate.target_control();
        psi.apply_matrix(&m_dag, target, control);
        let derivs = u3_derivatives(p)?;
        let overlaps = derivative_overlaps(&lam, &psi, &derivs, target, control);
        for (k, ov) in overlaps.iter().enumerate() {
            grad[gate.offset() + k] = 2.0 * ov.re;
        }
        lam.apply_matrix(&m_dag, target, control);
    }
    Ok(grad)
}

/// `⟨λ| D |ψ⟩` for each derivative matrix `D` acting on `target` (and only
/// on the control-set subspace when a control is given). Summed
/// sequentially in index order.
fn derivative_overlaps(
    lam: &Statevector,
    psi: &Statevector,
    derivs: &[Mat2; 3],
    target: usize,
    control: Option<usize>,
) -> [C64; 3] {
    let stride = 1usize << target;
    let cmask = control.map_or(0, |c| 1usize << c);
    let l = lam.amplitudes();
    let s = psi.amplitudes();
    let mut acc = [C64::new(0.0, 0.0); 3];
    for i in 0..s.len() {
        if i & stride != 0 || i & cmask != cmask {
            continue;
        }
        let j = i | stride;
        let (a, b) = (s[i], s[j]);
        let (la, lb) = (l[i].conj(), l[j].conj());
        for (acc, d) in acc.iter_mut().zip(derivs) {
            *acc += la * (d[0][0] * a + d[0][1] * b) + lb * (d[1][0] * a + d[1][1] * b);
        }
    }
    acc
}
