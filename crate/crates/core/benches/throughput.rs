//! Throughput of the data-parallel kernels on the global rayon pool versus a
//! single worker thread.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fqt_core::fed::QtSetup;
use fqt_core::qsim::{grad_ansatz, AnsatzSpec, GateParams, Statevector, ThetaVector};
use fqt_core::seeded_rng;
use fqt_nn::{loss_and_grad, Batch, ModelPreset, Shape};
use rand::Rng;
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, Option<ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    vec![("rayon", None), ("sequential", Some(single))]
}

fn run<R>(pool: &Option<ThreadPool>, f: impl FnOnce() -> R + Send) -> R
where
    R: Send,
{
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn gates(c: &mut Criterion) {
    let mut group = c.benchmark_group("u3_layer");
    let p = GateParams::new(0.3, 1.1, -0.4);
    for n in [16usize, 20] {
        for (name, pool) in pools() {
            let mut state = Statevector::zero(n).unwrap();
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| {
                    run(&pool, || {
                        for q in 0..n {
                            state.apply_u3(q, p).unwrap();
                        }
                    })
                })
            });
        }
    }
    group.finish();
}

fn ansatz_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("ansatz_grad");
    group.sample_size(20);
    let spec = AnsatzSpec::new(16, 4).unwrap();
    let theta = ThetaVector::random(&spec, &mut seeded_rng(0, 0));
    let mut rng = seeded_rng(0, 1);
    let dl_dp: Vec<f64> = (0..1usize << 16)
        .map(|_| rng.random::<f64>() - 0.5)
        .collect();
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            b.iter(|| run(&pool, || grad_ansatz(&spec, &theta, &dl_dp).unwrap()))
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("vgg_small_generation");
    group.sample_size(10);
    let image = Shape::Image {
        channels: 3,
        height: 32,
        width: 32,
    };
    let target = ModelPreset::VggSmall.build(image, 10).unwrap();
    let setup = QtSetup::new(target, 500, 4, vec![16, 16]).unwrap();
    let params = setup.init(0).unwrap();
    let mut rng = seeded_rng(0, 2);
    let inputs: Vec<f64> = (0..8 * image.len()).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 10).collect();
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("generate", name), |b| {
            b.iter(|| {
                run(&pool, || {
                    setup.generator(&params).unwrap().generate().unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("train_step", name), |b| {
            b.iter(|| {
                run(&pool, || {
                    let generator = setup.generator(&params).unwrap();
                    let (omega, tape) = generator.generate().unwrap();
                    let batch = Batch {
                        inputs: &inputs,
                        labels: &labels,
                    };
                    let (_, d_omega) = loss_and_grad(setup.target(), &omega, batch).unwrap();
                    generator.backprop(&tape, &d_omega).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gates, ansatz_gradient, generation);
criterion_main!(benches);
