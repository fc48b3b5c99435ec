//! Sequential vs rayon kernel comparison, plus end-to-end decomposition and
//! container-compression benches under whichever feature set is active.
//!
//! `cargo bench` runs the parallel build; `cargo bench --no-default-features`
//! measures the sequential fallback end to end.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tdz_core::container::{CompressionPolicy, ModelContainer, TensorEntry};
use tdz_core::decompose::decompose_tucker;
use tdz_core::kernels;
use tdz_core::svd::svd_full;
use tdz_core::synth;
use tdz_core::tensor::DenseTensor;

fn filled(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i % 23) as f64) * 0.17 - 1.9).collect()
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [96usize, 256] {
        let a = filled(n * n);
        let b = filled(n * n);
        let mut out = vec![0.0f64; n * n];
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |bch, &n| {
            bch.iter(|| kernels::matmul_seq(black_box(&a), black_box(&b), n, n, n, &mut out))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |bch, &n| {
            bch.iter(|| kernels::matmul_par(black_box(&a), black_box(&b), n, n, n, &mut out))
        });
    }
    group.finish();
}

fn bench_conv1d(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv1d");
    let (co, ci, k, frames) = (64usize, 64, 9, 128);
    let w = filled(co * ci * k);
    let x = filled(ci * frames);
    let mut out = vec![0.0f64; co * (frames - k + 1)];
    group.bench_function("seq", |bch| {
        bch.iter(|| kernels::conv1d_seq(black_box(&w), black_box(&x), co, ci, k, frames, &mut out))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |bch| {
        bch.iter(|| kernels::conv1d_par(black_box(&w), black_box(&x), co, ci, k, frames, &mut out))
    });
    group.finish();
}

fn bench_sum_sq(c: &mut Criterion) {
    let mut group = c.benchmark_group("frobenius_sum_sq");
    let data: Vec<f32> = (0..1 << 20).map(|i| ((i % 31) as f32) * 0.05).collect();
    group.bench_function("seq", |bch| bch.iter(|| kernels::sum_sq_seq(black_box(&data))));
    #[cfg(feature = "parallel")]
    group.bench_function("par", |bch| bch.iter(|| kernels::sum_sq_par(black_box(&data))));
    group.finish();
}

fn feature_label() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_svd(c: &mut Criterion) {
    let mut group = c.benchmark_group("svd_jacobi");
    group.sample_size(10);
    for n in [64usize, 128] {
        let m = synth::weight_like_tensor(&[n, n], 5, synth::DEFAULT_DECAY);
        group.bench_with_input(
            BenchmarkId::new(feature_label(), n),
            &m,
            |bch, m: &DenseTensor| bch.iter(|| svd_full(black_box(m)).unwrap()),
        );
    }
    group.finish();
}

fn bench_tucker(c: &mut Criterion) {
    let mut group = c.benchmark_group("tucker_decompose");
    group.sample_size(10);
    let t = synth::weight_like_tensor(&[48, 48, 9], 11, synth::DEFAULT_DECAY);
    group.bench_function(feature_label(), |bch| {
        bch.iter(|| decompose_tucker(black_box(&t), &[24, 24, 4], 2).unwrap())
    });
    group.finish();
}

fn bench_compress(c: &mut Criterion) {
    let mut group = c.benchmark_group("container_compress");
    group.sample_size(10);
    let container = ModelContainer::from_entries(vec![
        TensorEntry::dense(
            "enc.lin",
            tdz_core::container::Role::LinearWeight,
            tdz_core::container::Group::Encoder,
            synth::weight_like_tensor(&[128, 128], 1, synth::DEFAULT_DECAY),
        )
        .unwrap(),
        TensorEntry::dense(
            "enc.conv",
            tdz_core::container::Role::Conv1dKernel,
            tdz_core::container::Group::Encoder,
            synth::weight_like_tensor(&[48, 48, 9], 2, synth::DEFAULT_DECAY),
        )
        .unwrap(),
        TensorEntry::dense(
            "dec.lin",
            tdz_core::container::Role::LinearWeight,
            tdz_core::container::Group::Decoder,
            synth::weight_like_tensor(&[128, 256], 3, synth::DEFAULT_DECAY),
        )
        .unwrap(),
    ])
    .unwrap();
    let policy = CompressionPolicy::new(0.25, 0.3).unwrap();
    group.bench_function(feature_label(), |bch| {
        bch.iter(|| tdz_core::container::compress(black_box(&container), &policy).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_matmul,
    bench_conv1d,
    bench_sum_sq,
    bench_svd,
    bench_tucker,
    bench_compress
);
criterion_main!(benches);
