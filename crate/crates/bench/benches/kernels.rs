use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaesim::baselines::{kmeans, KMeansOptions};
use vaesim::nn::{Act, Conv2d, Module};
use vaesim::train::forward_backward;
use vaesim::{assign, ArchConfig, Matrix, MemoryBank, PrototypeBank, Vae};

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random::<f32>()).collect()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut layer = Conv2d::<f32>::new("conv", 1, 32, 4, 2, 1, &mut rng);
    let x = Act::new(uniform(&mut rng, 64 * 32 * 32), 64, 1, 32, 32);
    c.bench_function("conv2d_forward_b64", |b| b.iter(|| black_box(layer.forward_eval(&x))));
    let y = layer.forward_train(&x);
    let dy = Act::new(vec![1e-3; y.data.len()], y.n, y.c, y.h, y.w);
    c.bench_function("conv2d_train_step_b64", |b| {
        b.iter(|| {
            layer.zero_grad();
            layer.forward_train(&x);
            black_box(layer.backward(&dy))
        })
    });
}

fn train_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut vae = Vae::<f32>::new(ArchConfig::standard(32, 10), &mut rng).unwrap();
    let x = Act::new(uniform(&mut rng, 64 * 32 * 32), 64, 1, 32, 32);
    let eps = Matrix::new(uniform(&mut rng, 64 * 32), 64, 32).unwrap();
    let mut bank = PrototypeBank::<f32>::new(10, 32, 0.95).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("forward_backward_b64", |b| {
        b.iter(|| {
            vae.zero_grad();
            black_box(forward_backward(&mut vae, Some(&mut bank), &x, &eps, 0.5, 1.0, 0.0, 7).unwrap())
        })
    });
    group.finish();
}

fn prototypes(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = Matrix::new(uniform(&mut rng, 2048 * 32), 2048, 32).unwrap();
    let q = Matrix::new(uniform(&mut rng, 10 * 32), 10, 32).unwrap();
    let bank = PrototypeBank::from_matrix(q, 0.95).unwrap();
    c.bench_function("similarity_assign_b2048", |b| {
        b.iter(|| black_box(assign(&bank.similarity(&z).unwrap(), 0.1).unwrap()))
    });
    let labels: Vec<usize> = (0..2048).map(|i| i % 10).collect();
    c.bench_function("ema_update_b2048", |b| {
        b.iter_batched(
            || bank.clone(),
            |mut bk| black_box(bk.update(&z, &labels).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn clustering(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = Matrix::new((0..2000 * 16).map(|_| rng.random::<f64>()).collect(), 2000, 16).unwrap();
    let opts = KMeansOptions {
        n_restarts: 1,
        ..KMeansOptions::default()
    };
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    group.bench_function("n2000_d16_k10", |b| {
        b.iter(|| black_box(kmeans(&pts, 10, 5, opts).unwrap()))
    });
    group.finish();

    let emb = Matrix::new(uniform(&mut rng, 5000 * 32), 5000, 32).unwrap();
    let memory = MemoryBank::new(emb, (0..5000).map(|i| i % 10).collect()).unwrap();
    let query = uniform(&mut rng, 32);
    c.bench_function("knn_predict_m5000_k5", |b| {
        b.iter(|| black_box(memory.predict(&query, 5)))
    });
}

criterion_group!(benches, conv, train_step, prototypes, clustering);
criterion_main!(benches);
