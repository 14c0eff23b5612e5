//! Hot paths timed under the build's execution mode. With the default
//! `parallel` feature each workload also runs inside a one-thread pool, so a
//! single `cargo bench` shows both; `--no-default-features` gives the plain
//! sequential build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use proxylab::dyck::{sample_sentence, DyckSample, DyckSpec, DEFAULT_MIN_DISTANCE};
use proxylab::model::loss::loss_and_grad;
use proxylab::model::{closing_bracket_accuracy, init_model, ModelConfig, ModelParameters};
use proxylab::numerics::{kmeans, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture() -> (ModelParameters, Vec<DyckSample>) {
    let spec = DyckSpec::new(4, 6, 96).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples = (0..32).map(|_| sample_sentence(&spec, &mut rng)).collect();
    let params = init_model(&ModelConfig::dyck(4, 96), 0).unwrap();
    (params, samples)
}

fn points() -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = (0..4000 * 32).map(|_| rng.random::<f64>()).collect();
    Tensor::matrix(4000, 32, data).unwrap()
}

fn modes() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let mut out = Vec::new();
    if proxylab::par::is_parallel() {
        out.push(("parallel", None));
        out.push(("one_thread", Some(rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())));
    } else {
        out.push(("sequential", None));
    }
    out
}

fn in_mode<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn benches(c: &mut Criterion) {
    let (params, samples) = fixture();
    let batch: Vec<Vec<u32>> = samples.iter().map(|s| s.tokens.clone()).collect();
    let pts = points();
    let mut g = c.benchmark_group("hot_paths");
    g.sample_size(10);
    for (mode, pool) in modes() {
        g.bench_function(BenchmarkId::new("batch_gradient", mode), |b| {
            b.iter(|| in_mode(&pool, || loss_and_grad(&params, &batch, None).unwrap()))
        });
        g.bench_function(BenchmarkId::new("closing_accuracy", mode), |b| {
            b.iter(|| in_mode(&pool, || closing_bracket_accuracy(&params, &samples, 4, DEFAULT_MIN_DISTANCE)))
        });
        g.bench_function(BenchmarkId::new("kmeans_k16", mode), |b| {
            b.iter(|| in_mode(&pool, || kmeans(&pts, 16, 0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches_group, benches);
criterion_main!(benches_group);
