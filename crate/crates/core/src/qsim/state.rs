use rand_distr::{Binomial, Distribution};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::gate::{u3_matrix, GateParams, Mat2, C64};
use crate::{Error, Result};

/// Largest register this simulator will allocate.
pub const MAX_QUBITS: usize = 30;

/// States at least this long apply gates on the rayon pool.
#[cfg(feature = "parallel")]
const PARALLEL_LEN: usize = 1 << 14;

/// Pure state of `n_qubits` qubits; amplitude `i` belongs to the basis state
/// whose bit `q` is the value of qubit `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl Statevector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::InvalidArgument(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Statevector { n_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two ≥ 2 and the
    /// vector must have unit norm within 1e-10.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(Error::Shape(format!(
                "amplitude vector of length {len} is not a register size"
            )));
        }
        let state = Statevector {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        };
        if (state.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "amplitudes have norm {}",
                state.norm()
            )));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Raw amplitude access for the adjoint sweep, which scales a copy of
    /// the state into a non-normalized cotangent vector.
    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {q} out of range for {} qubits",
                self.n_qubits
            )));
        }
        Ok(())
    }

    pub fn apply_u3(&mut self, qubit: usize, p: GateParams) -> Result<()> {
        self.check_qubit(qubit)?;
        let m = u3_matrix(p)?;
        self.apply_matrix(&m, qubit, None);
        Ok(())
    }

    /// U3 on `target` conditioned on `control` being 1.
    pub fn apply_cu3(&mut self, control: usize, target: usize, p: GateParams) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::InvalidPair { control, target });
        }
        let m = u3_matrix(p)?;
        self.apply_matrix(&m, target, Some(control));
        Ok(())
    }

    /// Applies `m` to `target`, restricted to amplitudes whose `control` bit
    /// is set when a control is given. Indices are assumed valid.
    pub(crate) fn apply_matrix(&mut self, m: &Mat2, target: usize, control: Option<usize>) {
        let cmask = control.map_or(0, |c| 1usize << c);
        for_each_pair(&mut self.amps, target, |i, lo, hi| {
            if i & cmask == cmask {
                let (a, b) = (*lo, *hi);
                *lo = m[0][0] * a + m[0][1] * b;
                *hi = m[1][0] * a + m[1][1] * b;
            }
        });
    }
}

/// Calls `f(low_index, low, high)` for every amplitude pair differing only in
/// bit `target`. Each pair is visited exactly once, so the result does not
/// depend on scheduling.
pub(crate) fn for_each_pair<F>(amps: &mut [C64], target: usize, f: F)
where
    F: Fn(usize, &mut C64, &mut C64) + Sync + Send,
{
    let stride = 1usize << target;
    let block = 2 * stride;
    let visit_block = |b: usize, chunk: &mut [C64]| {
        let (lo, hi) = chunk.split_at_mut(stride);
        for (k, (l, h)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
            f(b * block + k, l, h);
        }
    };
    #[cfg(feature = "parallel")]
    if amps.len() >= PARALLEL_LEN {
        let n_blocks = amps.len() / block;
        if n_blocks >= 64 {
            amps.par_chunks_mut(block)
                .enumerate()
                .for_each(|(b, chunk)| visit_block(b, chunk));
        } else {
            for (b, chunk) in amps.chunks_mut(block).enumerate() {
                let (lo, hi) = chunk.split_at_mut(stride);
                lo.par_iter_mut()
                    .zip(hi.par_iter_mut())
                    .enumerate()
                    .for_each(|(k, (l, h))| f(b * block + k, l, h));
            }
        }
        return;
    }
    amps.chunks_mut(block)
        .enumerate()
        .for_each(|(b, chunk)| visit_block(b, chunk));
}

/// Basis-state probabilities `|⟨i|ψ⟩|²`.
pub fn probabilities(state: &Statevector) -> Vec<f64> {
    state.amps.iter().map(|a| a.norm_sqr()).collect()
}

/// Multinomial measurement counts for `shots` shots, drawn as a chain of
/// conditional binomials. The counts sum to `shots` exactly.
pub fn sample_counts(state: &Statevector, shots: u64, seed: u64) -> Result<Vec<u64>> {
    if shots < 1 {
        return Err(Error::InvalidArgument("shots must be ≥ 1".into()));
    }
    let probs = probabilities(state);
    let mut rng = crate::seeded_rng(seed, 0x5407);
    let mut remaining = shots;
    let mut mass = 1.0f64;
    let last = probs.len() - 1;
    let mut counts = vec![0u64; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == last {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let k = Binomial::new(remaining, q)
            .map_err(|e| Error::InvalidState(format!("binomial draw: {e}")))?
            .sample(&mut rng);
        counts[i] = k;
        remaining -= k;
        mass -= p;
    }
    Ok(counts)
}

/// Empirical basis frequencies from `shots` simulated measurements;
/// deterministic for a given seed.
pub fn sample_probabilities(state: &Statevector, shots: u64, seed: u64) -> Result<Vec<f64>> {
    let counts = sample_counts(state, shots, seed)?;
    Ok(counts.iter().map(|&k| k as f64 / shots as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn hadamard() -> GateParams {
        GateParams::new(PI / 2.0, 0.0, PI)
    }

    #[test]
    fn zero_state_shape() {
        let s = Statevector::zero(3).unwrap();
        assert_eq!(s.amplitudes().len(), 8);
        assert_eq!(probabilities(&s), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(Statevector::zero(0).is_err());
    }

    #[test]
    fn identity_and_flip() {
        let mut s = Statevector::zero(1).unwrap();
        s.apply_u3(0, GateParams::default()).unwrap();
        assert_eq!(probabilities(&s), [1.0, 0.0]);
        s.apply_u3(0, GateParams::new(PI, 0.0, PI)).unwrap();
        assert!((probabilities(&s)[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn controlled_gate_respects_control() {
        // |00⟩ is untouched whatever the parameters.
        let mut s = Statevector::zero(2).unwrap();
        s.apply_cu3(0, 1, GateParams::new(1.1, 0.3, -0.4)).unwrap();
        assert_eq!(probabilities(&s), [1.0, 0.0, 0.0, 0.0]);
        // Qubit 0 set (index 1) → controlled-X flips qubit 1 → index 3.
        s.apply_u3(0, GateParams::new(PI, 0.0, PI)).unwrap();
        s.apply_cu3(0, 1, GateParams::new(PI, 0.0, PI)).unwrap();
        assert!((probabilities(&s)[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn index_and_pair_errors() {
        let mut s = Statevector::zero(2).unwrap();
        assert!(matches!(
            s.apply_u3(2, GateParams::default()),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            s.apply_cu3(1, 1, GateParams::default()),
            Err(Error::InvalidPair { .. })
        ));
        assert!(matches!(
            s.apply_cu3(0, 5, GateParams::default()),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn hadamard_probabilities() {
        let mut s = Statevector::zero(1).unwrap();
        s.apply_u3(0, hadamard()).unwrap();
        for p in probabilities(&s) {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_basis_state_is_indicator() {
        let mut s = Statevector::zero(3).unwrap();
        s.apply_u3(1, GateParams::new(PI, 0.0, PI)).unwrap();
        let f = sample_probabilities(&s, 777, 3).unwrap();
        assert_eq!(f, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampling_hadamard_and_determinism() {
        let mut s = Statevector::zero(1).unwrap();
        s.apply_u3(0, hadamard()).unwrap();
        let a = sample_probabilities(&s, 1_000_000, 42).unwrap();
        for p in &a {
            assert!((p - 0.5).abs() <= 0.002, "{p}");
        }
        assert_eq!(a, sample_probabilities(&s, 1_000_000, 42).unwrap());
        assert_eq!(
            sample_counts(&s, 1_000_000, 42)
                .unwrap()
                .iter()
                .sum::<u64>(),
            1_000_000
        );
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(sample_probabilities(&s, 0, 1).is_err());
    }

    #[test]
    fn amplitudes_validated() {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!(Statevector::from_amplitudes(vec![h, h]).is_ok());
        assert!(Statevector::from_amplitudes(vec![h, h, h]).is_err());
        assert!(Statevector::from_amplitudes(vec![h, C64::new(0.0, 0.0)]).is_err());
    }
}
