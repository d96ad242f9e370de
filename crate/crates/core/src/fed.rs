//! Federated training of the generator parameters.
//!
//! Each round the central node broadcasts `(θ, β)`, every client trains a
//! private copy on its shard with a fresh Adam state, and the central node
//! replaces the globals with a weighted mean of the returned parameters.
//! Clients own independent RNG streams keyed by id and are aggregated in id
//! order, so a run is reproducible however the clients are scheduled.

use std::time::{Duration, Instant};

use fqt_data::Dataset;
use fqt_nn::weights::quantize;
use fqt_nn::{evaluate, loss_and_grad, Adam, AdamConfig, Batch, Evaluation, ModelSpec};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::qsim::{AnsatzSpec, ThetaVector};
use crate::qtgen::{
    parameter_report, plan_chunks, ChunkPlan, Generator, MappingModel, ParameterReport,
};
use crate::{seeded_rng, Error, Result};

const INIT_STREAM: u64 = 1;
const PARTITION_STREAM: u64 = 2;
const CLIENT_STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every client counts equally.
    #[default]
    Uniform,
    /// Clients are weighted by shard size.
    SizeWeighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedConfig {
    pub n_clients: usize,
    pub n_rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        FederatedConfig {
            n_clients: 4,
            n_rounds: 30,
            local_epochs: 1,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            aggregation: Aggregation::Uniform,
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_clients", self.n_clients),
            ("n_rounds", self.n_rounds),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be ≥ 1")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }
}

/// Generator parameters exchanged between clients and the central node.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalParams {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GlobalParams {
    pub fn flat(&self) -> Vec<f64> {
        [self.theta.as_slice(), &self.beta].concat()
    }

    /// Largest elementwise difference between two parameter sets.
    pub fn max_abs_diff(&self, other: &GlobalParams) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .chain(self.beta.iter().zip(&other.beta))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Target network plus everything needed to generate its weights.
#[derive(Clone, Debug)]
pub struct QtSetup {
    ansatz: AnsatzSpec,
    plan: ChunkPlan,
    hidden: Vec<usize>,
    target: ModelSpec,
}

/// Global model quality with the weights exactly as they would be exported.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalEvaluation {
    /// Generated weights rounded to the export precision.
    pub omega: Vec<f64>,
    pub train: Evaluation,
    pub test: Evaluation,
}

impl QtSetup {
    /// Derives the chunk plan and qubit count from the target's size.
    pub fn new(
        target: ModelSpec,
        n_mlp: usize,
        n_layers: usize,
        hidden: Vec<usize>,
    ) -> Result<Self> {
        let plan = plan_chunks(target.param_count(), n_mlp)?;
        let ansatz = AnsatzSpec::new(plan.n_qubits, n_layers)?;
        crate::qtgen::mapping_spec(&plan, &hidden)?;
        Ok(QtSetup {
            ansatz,
            plan,
            hidden,
            target,
        })
    }

    pub fn ansatz(&self) -> &AnsatzSpec {
        &self.ansatz
    }

    pub fn plan(&self) -> &ChunkPlan {
        &self.plan
    }

    pub fn target(&self) -> &ModelSpec {
        &self.target
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn report(&self) -> ParameterReport {
        parameter_report(
            self.plan.m,
            self.plan.n_mlp,
            self.ansatz.n_layers(),
            &self.hidden,
        )
        .expect("validated at construction")
    }

    /// θ uniform in [−π, π], β with fan-in scaled uniform bounds.
    pub fn init(&self, seed: u64) -> Result<GlobalParams> {
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let theta = ThetaVector::random(&self.ansatz, &mut rng).into_inner();
        let beta = MappingModel::init(&self.plan, &self.hidden, &mut rng)?
            .beta()
            .to_vec();
        Ok(GlobalParams { theta, beta })
    }

    pub fn generator(&self, params: &GlobalParams) -> Result<Generator> {
        Generator::new(
            self.ansatz,
            self.plan,
            ThetaVector::new(&self.ansatz, params.theta.clone())?,
            MappingModel::new(&self.plan, &self.hidden, params.beta.clone())?,
        )
    }

    /// Generates ω once and scores it on both splits.
    pub fn evaluate(
        &self,
        params: &GlobalParams,
        train: &Dataset,
        test: &Dataset,
    ) -> Result<GlobalEvaluation> {
        let omega = quantize(&self.generator(params)?.generate()?.0);
        let score = |d: &Dataset| {
            evaluate(
                &self.target,
                &omega,
                Batch {
                    inputs: d.inputs(),
                    labels: d.labels(),
                },
            )
        };
        Ok(GlobalEvaluation {
            train: score(train)?,
            test: score(test)?,
            omega,
        })
    }
}

/// IID split of `n_samples` indices into `n_clients` shards whose sizes
/// differ by at most one (earlier shards take the remainder).
pub fn partition_dataset(n_samples: usize, n_clients: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 || n_clients > n_samples {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n_samples} samples across {n_clients} clients"
        )));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut seeded_rng(seed, PARTITION_STREAM));
    let base = n_samples / n_clients;
    let extra = n_samples % n_clients;
    let mut shards = Vec::with_capacity(n_clients);
    let mut start = 0;
    for c in 0..n_clients {
        let len = base + usize::from(c < extra);
        shards.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(shards)
}

/// RNG stream private to client `id`.
pub fn client_rng(seed: u64, id: usize) -> ChaCha8Rng {
    seeded_rng(seed, CLIENT_STREAM_BASE + id as u64)
}

/// A client node: its shard of the training set and its private RNG.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    /// Sample indices, in the order of the latest pass.
    pub shard: Vec<usize>,
    /// Parameters after the most recent local training.
    pub params: Option<GlobalParams>,
    rng: ChaCha8Rng,
}

impl ClientState {
    pub fn new(id: usize, shard: Vec<usize>, seed: u64) -> Self {
        ClientState {
            id,
            shard,
            params: None,
            rng: client_rng(seed, id),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    pub params: GlobalParams,
    /// Mean mini-batch loss of every local epoch.
    pub epoch_losses: Vec<f64>,
    pub batch_losses: Vec<f64>,
}

impl LocalUpdate {
    pub fn mean_loss(&self) -> f64 {
        if self.batch_losses.is_empty() {
            return f64::NAN;
        }
        self.batch_losses.iter().sum::<f64>() / self.batch_losses.len() as f64
    }
}

/// One generate → loss → backprop → Adam step on a single mini-batch.
fn train_step(
    generator: &mut Generator,
    adam: &mut Adam,
    target: &ModelSpec,
    inputs: &[f64],
    labels: &[usize],
) -> Result<f64> {
    let (omega, tape) = generator.generate()?;
    let (loss, d_omega) = loss_and_grad(target, &omega, Batch { inputs, labels })?;
    let (d_theta, d_beta) = generator.backprop(&tape, &d_omega)?;
    let mut params = generator.params();
    adam.step(&mut params, &[d_theta, d_beta].concat())?;
    generator.set_params(&params)?;
    Ok(loss)
}

/// Trains a copy of the globals on the client's shard for
/// `cfg.local_epochs` passes. The shard is reshuffled in place before every
/// pass, so the order carries over between rounds.
pub fn local_train(
    client: &mut ClientState,
    global: &GlobalParams,
    cfg: &FederatedConfig,
    setup: &QtSetup,
    data: &Dataset,
) -> Result<LocalUpdate> {
    let mut generator = setup.generator(global)?;
    let mut adam = Adam::new(cfg.adam(), global.theta.len() + global.beta.len());
    let mut epoch_losses = Vec::new();
    let mut batch_losses = Vec::new();
    if !client.shard.is_empty() {
        for _ in 0..cfg.local_epochs {
            client.shard.shuffle(&mut client.rng);
            let mut epoch = Vec::new();
            for idx in client.shard.chunks(cfg.batch_size) {
                let (xs, ys) = data.gather(idx);
                epoch.push(train_step(
                    &mut generator,
                    &mut adam,
                    setup.target(),
                    &xs,
                    &ys,
                )?);
            }
            epoch_losses.push(epoch.iter().sum::<f64>() / epoch.len() as f64);
            batch_losses.extend(epoch);
        }
    }
    let params = split_params(&generator);
    client.params = Some(params.clone());
    Ok(LocalUpdate {
        params,
        epoch_losses,
        batch_losses,
    })
}

fn split_params(generator: &Generator) -> GlobalParams {
    let flat = generator.params();
    let (theta, beta) = flat.split_at(generator.theta_len());
    GlobalParams {
        theta: theta.to_vec(),
        beta: beta.to_vec(),
    }
}

/// Weighted elementwise mean of client parameters, weights normalized to
/// sum to one. Computed as offsets from the first entry, in list order, so
/// identical inputs come back unchanged.
pub fn aggregate(params: &[GlobalParams], weights: &[f64]) -> Result<GlobalParams> {
    let first = params
        .first()
        .ok_or_else(|| Error::InvalidArgument("no client parameters to aggregate".into()))?;
    if weights.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} clients",
            weights.len(),
            params.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "aggregation weights must be finite and ≥ 0, got {weights:?}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "aggregation weights sum to zero".into(),
        ));
    }
    let (nt, nb) = (first.theta.len(), first.beta.len());
    if params
        .iter()
        .any(|p| p.theta.len() != nt || p.beta.len() != nb)
    {
        return Err(Error::InvalidArgument(
            "client parameter lengths differ".into(),
        ));
    }
    let mut theta = first.theta.clone();
    let mut beta = first.beta.clone();
    for (p, &w) in params.iter().zip(weights).skip(1) {
        let share = w / total;
        for (acc, (v, v0)) in theta.iter_mut().zip(p.theta.iter().zip(&first.theta)) {
            *acc += share * (v - v0);
        }
        for (acc, (v, v0)) in beta.iter_mut().zip(p.beta.iter().zip(&first.beta)) {
            *acc += share * (v - v0);
        }
    }
    Ok(GlobalParams { theta, beta })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    /// Mean mini-batch loss of each client during the round, by client id.
    pub client_train_loss: Vec<f64>,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub wall_clock: Duration,
}

#[derive(Clone, Debug)]
pub struct FederatedRun {
    /// Global model before the first round.
    pub initial: GlobalEvaluation,
    pub rounds: Vec<RoundMetrics>,
    pub params: GlobalParams,
    /// Export-precision weights generated from the final parameters.
    pub omega: Vec<f64>,
}

pub fn run_federated(
    cfg: &FederatedConfig,
    setup: &QtSetup,
    train: &Dataset,
    test: &Dataset,
) -> Result<FederatedRun> {
    run_federated_with(cfg, setup, train, test, |_, _| Ok(()))
}

/// Like [`run_federated`], calling `on_round` with each round's metrics and
/// the aggregated parameters.
pub fn run_federated_with<F>(
    cfg: &FederatedConfig,
    setup: &QtSetup,
    train: &Dataset,
    test: &Dataset,
    mut on_round: F,
) -> Result<FederatedRun>
where
    F: FnMut(&RoundMetrics, &GlobalParams) -> Result<()>,
{
    cfg.validate()?;
    let mut global = setup.init(cfg.seed)?;
    let mut clients: Vec<ClientState> = partition_dataset(train.len(), cfg.n_clients, cfg.seed)?
        .into_iter()
        .enumerate()
        .map(|(id, shard)| ClientState::new(id, shard, cfg.seed))
        .collect();
    let weights: Vec<f64> = clients
        .iter()
        .map(|c| match cfg.aggregation {
            Aggregation::Uniform => 1.0,
            Aggregation::SizeWeighted => c.shard.len() as f64,
        })
        .collect();
    let initial = setup.evaluate(&global, train, test)?;
    let mut last = initial.clone();
    let mut rounds = Vec::with_capacity(cfg.n_rounds);
    for round in 1..=cfg.n_rounds {
        let start = Instant::now();
        let broadcast = &global;
        #[cfg(feature = "parallel")]
        let updates: Vec<LocalUpdate> = clients
            .par_iter_mut()
            .map(|c| local_train(c, broadcast, cfg, setup, train))
            .collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let updates: Vec<LocalUpdate> = clients
            .iter_mut()
            .map(|c| local_train(c, broadcast, cfg, setup, train))
            .collect::<Result<_>>()?;
        let params: Vec<GlobalParams> = updates.iter().map(|u| u.params.clone()).collect();
        global = aggregate(&params, &weights)?;
        last = setup.evaluate(&global, train, test)?;
        let metrics = RoundMetrics {
            round,
            client_train_loss: updates.iter().map(LocalUpdate::mean_loss).collect(),
            train_loss: last.train.loss,
            train_accuracy: last.train.accuracy,
            test_loss: last.test.loss,
            test_accuracy: last.test.accuracy,
            wall_clock: start.elapsed(),
        };
        on_round(&metrics, &global)?;
        rounds.push(metrics);
    }
    Ok(FederatedRun {
        initial,
        rounds,
        params: global,
        omega: last.omega,
    })
}

/// One pass of the centralized reference trainer.
#[derive(Clone, Debug)]
pub struct CentralEpoch {
    pub params: GlobalParams,
    pub evaluation: GlobalEvaluation,
}

/// Single-node trainer used as the reference for one-client federations:
/// the same initialization, sample order and per-epoch optimizer reset, but
/// no broadcast or aggregation.
pub fn train_centralized(
    cfg: &FederatedConfig,
    setup: &QtSetup,
    train: &Dataset,
    test: &Dataset,
    epochs: usize,
) -> Result<Vec<CentralEpoch>> {
    cfg.validate()?;
    let init = setup.init(cfg.seed)?;
    let mut generator = setup.generator(&init)?;
    let mut order = partition_dataset(train.len(), 1, cfg.seed)?.remove(0);
    let mut rng = client_rng(cfg.seed, 0);
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut adam = Adam::new(cfg.adam(), generator.theta_len() + generator.beta_len());
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let (xs, ys) = train.gather(idx);
            train_step(&mut generator, &mut adam, setup.target(), &xs, &ys)?;
        }
        let params = split_params(&generator);
        out.push(CentralEpoch {
            evaluation: setup.evaluate(&params, train, test)?,
            params,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(theta: &[f64], beta: &[f64]) -> GlobalParams {
        GlobalParams {
            theta: theta.to_vec(),
            beta: beta.to_vec(),
        }
    }

    #[test]
    fn shard_sizes() {
        let s = partition_dataset(100, 4, 1).unwrap();
        assert!(s.iter().all(|x| x.len() == 25));
        let s = partition_dataset(10, 3, 1).unwrap();
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), [4, 3, 3]);
        let mut all: Vec<usize> = s.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let one = partition_dataset(20, 1, 5).unwrap();
        assert_eq!(one.len(), 1);
        assert_ne!(one[0], (0..20).collect::<Vec<_>>());
        assert_eq!(partition_dataset(20, 1, 5).unwrap(), one);
        assert!(partition_dataset(3, 4, 0).is_err());
        assert!(partition_dataset(3, 0, 0).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let a = p(&[1.0, 2.0], &[3.0]);
        assert_eq!(
            aggregate(&[a.clone(), a.clone(), a.clone()], &[1.0, 5.0, 2.0]).unwrap(),
            a
        );
        let v = p(&[0.5, -1.5], &[2.0]);
        let neg = p(&[-0.5, 1.5], &[-2.0]);
        assert_eq!(
            aggregate(&[v, neg], &[1.0, 1.0]).unwrap(),
            p(&[0.0, 0.0], &[0.0])
        );
        let got = aggregate(
            &[p(&[1.0], &[4.0]), p(&[3.0], &[0.0]), p(&[7.0], &[8.0])],
            &[2.0, 1.0, 1.0],
        )
        .unwrap();
        // (2·1 + 3 + 7) / 4 and (2·4 + 0 + 8) / 4
        assert!((got.theta[0] - 3.0).abs() <= 1e-15);
        assert!((got.beta[0] - 4.0).abs() <= 1e-15);
    }

    #[test]
    fn aggregation_errors() {
        let a = p(&[1.0], &[1.0]);
        assert!(aggregate(&[], &[]).is_err());
        assert!(aggregate(std::slice::from_ref(&a), &[0.0]).is_err());
        assert!(aggregate(std::slice::from_ref(&a), &[-1.0]).is_err());
        assert!(aggregate(&[a.clone(), p(&[1.0, 2.0], &[1.0])], &[1.0, 1.0]).is_err());
        assert!(aggregate(&[a], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FederatedConfig::default().validate().is_ok());
        for bad in [
            FederatedConfig {
                n_rounds: 0,
                ..Default::default()
            },
            FederatedConfig {
                n_clients: 0,
                ..Default::default()
            },
            FederatedConfig {
                local_epochs: 0,
                ..Default::default()
            },
            FederatedConfig {
                batch_size: 0,
                ..Default::default()
            },
            FederatedConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
