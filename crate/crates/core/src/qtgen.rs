//! Batched weight generation.
//!
//! The `m` target weights are split into `n_ch = ⌈m / n_mlp⌉` chunks. Chunk
//! `i` is produced by a small fully connected mapping network from the
//! binary expansion of `i` and the (rescaled) probability of basis state `i`
//! under the ansatz, so the ansatz only needs `⌈log₂ n_ch⌉` qubits.

use std::sync::atomic::{AtomicU64, Ordering};

use fqt_nn::{ForwardTape, Layer, ModelSpec, Shape};
use rand::Rng;
use serde::Serialize;

use crate::qsim::{
    grad_ansatz_from_state, probabilities, run_ansatz, AnsatzSpec, Statevector, ThetaVector,
};
use crate::{Error, Result};

/// Chunk arithmetic for a target of `m` weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ChunkPlan {
    pub m: usize,
    pub n_mlp: usize,
    pub n_chunks: usize,
    pub n_qubits: usize,
}

/// `⌈log₂ n⌉` for `n ≥ 1`.
fn ceil_log2(n: usize) -> usize {
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// Hidden widths of the mapping network when none are configured.
pub const DEFAULT_MAPPING_HIDDEN: [usize; 2] = [32, 32];

pub fn plan_chunks(m: usize, n_mlp: usize) -> Result<ChunkPlan> {
    if m == 0 || n_mlp == 0 {
        return Err(Error::InvalidArgument(format!(
            "m and n_mlp must be positive, got m = {m}, n_mlp = {n_mlp}"
        )));
    }
    let n_chunks = m.div_ceil(n_mlp);
    Ok(ChunkPlan {
        m,
        n_mlp,
        n_chunks,
        n_qubits: ceil_log2(n_chunks).max(1),
    })
}

impl ChunkPlan {
    /// Weights produced before truncation, `n_ch · n_mlp`.
    pub fn generated_len(&self) -> usize {
        self.n_chunks * self.n_mlp
    }

    /// Qubits needed with one weight per basis state (`n_mlp = 1`).
    pub fn unbatched_qubits(&self) -> usize {
        ceil_log2(self.m).max(1)
    }

    pub fn is_unbatched(&self) -> bool {
        self.n_mlp == 1
    }

    /// Width of a mapping-network input row: `N` bits plus the probability.
    pub fn feature_dim(&self) -> usize {
        self.n_qubits + 1
    }
}

/// Mapping-network input for one chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFeature {
    /// Binary expansion of the chunk index, least-significant bit first.
    pub bits: Vec<f64>,
    /// Basis probability multiplied by `2^N`, so a uniform state gives 1.
    pub prob: f64,
}

impl BasisFeature {
    fn write_row(&self, row: &mut [f64]) {
        let (bits, prob) = row.split_at_mut(self.bits.len());
        bits.copy_from_slice(&self.bits);
        prob[0] = self.prob;
    }
}

pub fn basis_features(i: usize, plan: &ChunkPlan, probs: &[f64]) -> Result<BasisFeature> {
    if i >= plan.n_chunks {
        return Err(Error::Index(format!(
            "chunk {i} out of range for {} chunks",
            plan.n_chunks
        )));
    }
    let dim = 1usize << plan.n_qubits;
    if probs.len() != dim {
        return Err(Error::Shape(format!(
            "{} probabilities given for {} qubits",
            probs.len(),
            plan.n_qubits
        )));
    }
    Ok(BasisFeature {
        bits: (0..plan.n_qubits).map(|b| ((i >> b) & 1) as f64).collect(),
        prob: probs[i] * dim as f64,
    })
}

/// Layer stack of the mapping network: `tanh` hidden layers and a linear
/// output of width `n_mlp`.
pub fn mapping_spec(plan: &ChunkPlan, hidden: &[usize]) -> Result<ModelSpec> {
    if hidden.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "hidden widths must be positive, got {hidden:?}"
        )));
    }
    let mut layers = Vec::with_capacity(2 * hidden.len() + 1);
    let mut width = plan.feature_dim();
    for &h in hidden {
        layers.push(Layer::dense(width, h));
        layers.push(Layer::Tanh);
        width = h;
    }
    layers.push(Layer::dense(width, plan.n_mlp));
    Ok(ModelSpec::new(Shape::Flat(plan.feature_dim()), layers)?)
}

/// The mapping network and its flat parameters β.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingModel {
    spec: ModelSpec,
    beta: Vec<f64>,
}

impl MappingModel {
    pub fn new(plan: &ChunkPlan, hidden: &[usize], beta: Vec<f64>) -> Result<Self> {
        let spec = mapping_spec(plan, hidden)?;
        if beta.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "β has length {}, mapping network needs {}",
                beta.len(),
                spec.param_count()
            )));
        }
        Ok(MappingModel { spec, beta })
    }

    /// Every weight and bias drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init<R: Rng + ?Sized>(plan: &ChunkPlan, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let spec = mapping_spec(plan, hidden)?;
        let mut beta = Vec::with_capacity(spec.param_count());
        for layer in spec.layers() {
            let bound = 1.0 / (layer.fan_in().max(1) as f64).sqrt();
            beta.extend((0..layer.param_count()).map(|_| rng.random_range(-bound..bound)));
        }
        Ok(MappingModel { spec, beta })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn param_count(&self) -> usize {
        self.beta.len()
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Everything the reverse pass needs from one generation.
#[derive(Clone, Debug)]
pub struct GenerationTape {
    version: u64,
    state: Statevector,
    probs: Vec<f64>,
    mapping: ForwardTape,
}

impl GenerationTape {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn state(&self) -> &Statevector {
        &self.state
    }
}

/// Trainable generator: ansatz angles θ and mapping parameters β.
///
/// Every parameter change stamps a new version; tapes from older versions
/// are rejected by [`Generator::backprop`].
#[derive(Clone, Debug)]
pub struct Generator {
    ansatz: AnsatzSpec,
    plan: ChunkPlan,
    theta: ThetaVector,
    mapping: MappingModel,
    version: u64,
}

impl Generator {
    pub fn new(
        ansatz: AnsatzSpec,
        plan: ChunkPlan,
        theta: ThetaVector,
        mapping: MappingModel,
    ) -> Result<Self> {
        if ansatz.n_qubits() != plan.n_qubits {
            return Err(Error::Shape(format!(
                "ansatz has {} qubits, chunk plan needs {}",
                ansatz.n_qubits(),
                plan.n_qubits
            )));
        }
        ThetaVector::new(&ansatz, theta.as_slice().to_vec())?;
        let spec = mapping.spec();
        if spec.input_shape() != Shape::Flat(plan.feature_dim())
            || spec.output_shape() != Shape::Flat(plan.n_mlp)
        {
            return Err(Error::Shape(format!(
                "mapping network maps {:?} → {:?}, plan needs {} → {}",
                spec.input_shape(),
                spec.output_shape(),
                plan.feature_dim(),
                plan.n_mlp
            )));
        }
        Ok(Generator {
            ansatz,
            plan,
            theta,
            mapping,
            version: fresh_version(),
        })
    }

    pub fn ansatz(&self) -> &AnsatzSpec {
        &self.ansatz
    }

    pub fn plan(&self) -> &ChunkPlan {
        &self.plan
    }

    pub fn theta(&self) -> &ThetaVector {
        &self.theta
    }

    pub fn mapping(&self) -> &MappingModel {
        &self.mapping
    }

    pub fn theta_len(&self) -> usize {
        self.ansatz.param_count()
    }

    pub fn beta_len(&self) -> usize {
        self.mapping.param_count()
    }

    /// `θ ‖ β` as one vector.
    pub fn params(&self) -> Vec<f64> {
        [self.theta.as_slice(), self.mapping.beta()].concat()
    }

    /// Replaces `θ ‖ β`, invalidating earlier tapes.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.theta_len() + self.beta_len() {
            return Err(Error::Shape(format!(
                "{} parameters given, generator has {}",
                params.len(),
                self.theta_len() + self.beta_len()
            )));
        }
        let (t, b) = params.split_at(self.theta_len());
        self.theta = ThetaVector::new(&self.ansatz, t.to_vec())?;
        self.mapping.beta.copy_from_slice(b);
        self.version = fresh_version();
        Ok(())
    }

    /// Mapping-network input rows for every chunk.
    fn feature_rows(&self, probs: &[f64]) -> Result<Vec<f64>> {
        let width = self.plan.feature_dim();
        let mut rows = vec![0.0; self.plan.n_chunks * width];
        for (i, row) in rows.chunks_mut(width).enumerate() {
            basis_features(i, &self.plan, probs)?.write_row(row);
        }
        Ok(rows)
    }

    /// Generates the `m` target weights.
    pub fn generate(&self) -> Result<(Vec<f64>, GenerationTape)> {
        let state = run_ansatz(&self.ansatz, &self.theta)?;
        let probs = probabilities(&state);
        let rows = self.feature_rows(&probs)?;
        let mapping = self
            .mapping
            .spec
            .forward_cached(&self.mapping.beta, &rows)?;
        let omega = mapping.output()[..self.plan.m].to_vec();
        Ok((
            omega,
            GenerationTape {
                version: self.version,
                state,
                probs,
                mapping,
            },
        ))
    }

    /// Pulls `∂L/∂ω` back to `(∂L/∂θ, ∂L/∂β)`.
    pub fn backprop(
        &self,
        tape: &GenerationTape,
        dl_domega: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        if tape.version != self.version {
            return Err(Error::InvalidState(
                "generation tape is stale: parameters changed since it was recorded".into(),
            ));
        }
        if dl_domega.len() != self.plan.m {
            return Err(Error::Shape(format!(
                "∂L/∂ω has length {}, expected m = {}",
                dl_domega.len(),
                self.plan.m
            )));
        }
        // Truncated tail outputs receive zero gradient.
        let mut d_out = vec![0.0; self.plan.generated_len()];
        d_out[..self.plan.m].copy_from_slice(dl_domega);
        let grads = self
            .mapping
            .spec
            .backward(&self.mapping.beta, &tape.mapping, &d_out, true)?;
        let d_rows = grads.input.expect("input gradient requested");
        let width = self.plan.feature_dim();
        let dim = 1usize << self.plan.n_qubits;
        let mut dl_dp = vec![0.0; dim];
        for (i, row) in d_rows.chunks(width).enumerate() {
            dl_dp[i] = row[width - 1] * dim as f64;
        }
        let d_theta = grad_ansatz_from_state(&self.ansatz, &self.theta, &tape.state, &dl_dp)?;
        Ok((d_theta, grads.params))
    }
}

/// Parameter budget of a generator for a target of `m` weights.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParameterReport {
    pub m: usize,
    pub n_mlp: usize,
    pub n_chunks: usize,
    pub n_qubits: usize,
    pub unbatched_qubits: usize,
    pub n_layers: usize,
    pub hidden: Vec<usize>,
    pub theta_count: usize,
    pub beta_count: usize,
    pub trainable: usize,
    /// `trainable / m`.
    pub compression_ratio: f64,
}

pub fn parameter_report(
    m: usize,
    n_mlp: usize,
    n_layers: usize,
    hidden: &[usize],
) -> Result<ParameterReport> {
    let plan = plan_chunks(m, n_mlp)?;
    let ansatz = AnsatzSpec::new(plan.n_qubits, n_layers)?;
    let beta_count = mapping_spec(&plan, hidden)?.param_count();
    let theta_count = ansatz.param_count();
    Ok(ParameterReport {
        m,
        n_mlp,
        n_chunks: plan.n_chunks,
        n_qubits: plan.n_qubits,
        unbatched_qubits: plan.unbatched_qubits(),
        n_layers,
        hidden: hidden.to_vec(),
        theta_count,
        beta_count,
        trainable: theta_count + beta_count,
        compression_ratio: (theta_count + beta_count) as f64 / m as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn published_qubit_counts() {
        let cases = [(2000, 143, 8), (1000, 286, 9), (500, 571, 10)];
        for (n_mlp, n_ch, n) in cases {
            let plan = plan_chunks(285_226, n_mlp).unwrap();
            assert_eq!((plan.n_chunks, plan.n_qubits), (n_ch, n), "n_mlp = {n_mlp}");
        }
        assert_eq!(plan_chunks(285_226, 1).unwrap().n_qubits, 19);
        assert_eq!(plan_chunks(285_226, 2000).unwrap().unbatched_qubits(), 19);
    }

    #[test]
    fn small_plans() {
        let p = plan_chunks(8, 4).unwrap();
        assert_eq!((p.n_chunks, p.n_qubits), (2, 1));
        let p = plan_chunks(1, 1).unwrap();
        assert_eq!((p.n_chunks, p.n_qubits), (1, 1));
        let p = plan_chunks(16, 1).unwrap();
        assert_eq!(p.n_qubits, 4);
        assert!(plan_chunks(0, 3).is_err());
        assert!(plan_chunks(3, 0).is_err());
    }

    proptest! {
        #[test]
        fn plan_invariants(m in 1usize..2_000_000, n_mlp in 1usize..5000) {
            let p = plan_chunks(m, n_mlp).unwrap();
            prop_assert!(p.n_chunks <= 1 << p.n_qubits);
            prop_assert!(p.n_qubits == 1 || p.n_chunks > 1 << (p.n_qubits - 1));
            prop_assert!(m <= p.generated_len() && p.generated_len() < m + n_mlp);
        }
    }

    #[test]
    fn features_encode_index_and_scaled_probability() {
        let plan = ChunkPlan {
            m: 8,
            n_mlp: 1,
            n_chunks: 8,
            n_qubits: 3,
        };
        let uniform = [0.125; 8];
        let f = basis_features(0, &plan, &uniform).unwrap();
        assert_eq!(f.bits, [0.0, 0.0, 0.0]);
        assert_eq!(f.prob, 1.0);
        assert_eq!(
            basis_features(5, &plan, &uniform).unwrap().bits,
            [1.0, 0.0, 1.0]
        );
        assert!(matches!(
            basis_features(8, &plan, &uniform),
            Err(Error::Index(_))
        ));
        assert!(basis_features(0, &plan, &[0.5; 4]).is_err());
    }

    #[test]
    fn features_for_the_last_published_chunk() {
        let plan = plan_chunks(285_226, 2000).unwrap();
        let mut rng = seeded_rng(5, 0);
        let raw: Vec<f64> = (0..256)
            .map(|_| rand::Rng::random::<f64>(&mut rng))
            .collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let f = basis_features(142, &plan, &probs).unwrap();
        // 142 = 0b1000_1110
        assert_eq!(f.bits, [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.prob, probs[142] * 256.0);
    }

    fn generator(m: usize, n_mlp: usize, hidden: &[usize], seed: u64) -> Generator {
        let plan = plan_chunks(m, n_mlp).unwrap();
        let ansatz = AnsatzSpec::new(plan.n_qubits, 2).unwrap();
        let mut rng = seeded_rng(seed, 0);
        let theta = ThetaVector::random(&ansatz, &mut rng);
        let mapping = MappingModel::init(&plan, hidden, &mut rng).unwrap();
        Generator::new(ansatz, plan, theta, mapping).unwrap()
    }

    #[test]
    fn truncation_keeps_first_m() {
        let g = generator(10, 4, &[5], 1);
        assert_eq!(g.plan().n_chunks, 3);
        let (omega, tape) = g.generate().unwrap();
        assert_eq!(omega.len(), 10);
        let full = g
            .mapping()
            .spec()
            .forward(
                g.mapping().beta(),
                &g.feature_rows(tape.probabilities()).unwrap(),
            )
            .unwrap();
        assert_eq!(full.len(), 12);
        assert_eq!(&full[..10], &omega[..]);

        let exact = generator(12, 4, &[5], 1);
        assert_eq!(exact.generate().unwrap().0.len(), 12);
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let g = generator(50, 3, &[6, 4], 7);
        let a = g.generate().unwrap().0;
        let b = g.clone().generate().unwrap().0;
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn unbatched_case_is_one_weight_per_basis_state() {
        let g = generator(6, 1, &[4], 3);
        let (omega, tape) = g.generate().unwrap();
        let probs = tape.probabilities();
        for (i, w) in omega.iter().enumerate() {
            let f = basis_features(i, g.plan(), probs).unwrap();
            let row = [f.bits.clone(), vec![f.prob]].concat();
            let single = g
                .mapping()
                .spec()
                .forward(g.mapping().beta(), &row)
                .unwrap();
            assert_eq!(single, vec![*w]);
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let g = generator(6, 2, &[3], 2);
        let (_, tape) = g.generate().unwrap();
        let (dt, db) = g.backprop(&tape, &[0.0; 6]).unwrap();
        assert!(dt.iter().chain(&db).all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_rejected() {
        let mut g = generator(6, 2, &[3], 2);
        let (_, tape) = g.generate().unwrap();
        let p = g.params();
        g.set_params(&p).unwrap();
        assert!(matches!(
            g.backprop(&tape, &[1.0; 6]),
            Err(Error::InvalidState(_))
        ));
        let (_, fresh) = g.generate().unwrap();
        assert!(g.backprop(&fresh, &[1.0; 6]).is_ok());
        assert!(g.backprop(&fresh, &[1.0; 5]).is_err());
    }

    #[test]
    fn mismatched_parts_rejected() {
        let plan = plan_chunks(40, 4).unwrap();
        let mut rng = seeded_rng(0, 0);
        let mapping = MappingModel::init(&plan, &[3], &mut rng).unwrap();
        let wrong = AnsatzSpec::new(plan.n_qubits + 1, 1).unwrap();
        let theta = ThetaVector::random(&wrong, &mut rng);
        assert!(Generator::new(wrong, plan, theta, mapping.clone()).is_err());
        let other = plan_chunks(40, 5).unwrap();
        let ansatz = AnsatzSpec::new(plan.n_qubits, 1).unwrap();
        let theta = ThetaVector::random(&ansatz, &mut rng);
        let foreign = MappingModel::init(&other, &[3], &mut rng).unwrap();
        assert!(Generator::new(ansatz, plan, theta, foreign).is_err());
        assert!(MappingModel::new(&plan, &[3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn report_for_the_smallest_published_setup() {
        let r = parameter_report(285_226, 500, 5, &DEFAULT_MAPPING_HIDDEN).unwrap();
        assert_eq!((r.n_chunks, r.n_qubits, r.theta_count), (571, 10, 285));
        // 11·32+32 + 32·32+32 + 32·500+500
        assert_eq!(r.beta_count, 384 + 1056 + 16_500);
        assert!(r.compression_ratio < 0.15);
    }
}
