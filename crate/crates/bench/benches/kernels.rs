// SPDX-License-Identifier: MIT OR Apache-2.0

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use graftlab_core::grafting::{build_mask, builtin_suite, grafted_next_token_dist, PromptAnnotation, Registry};
use graftlab_core::model::{forward_full, forward_step, init_params, KvCache, ModelConfig, ModelParams, ParamSource};
use graftlab_core::tensor::kernels::gemm;
use graftlab_core::trainer::{train, TrainConfig};

fn small_model(seed: u64) -> ModelParams {
    let config = ModelConfig {
        n_layers: 4,
        n_heads: 4,
        d_model: 64,
        d_ff: 256,
        vocab_size: 1200,
        max_seq_len: 32,
        tie_embeddings: false,
    };
    init_params(&config, seed).unwrap()
}

fn prompt(len: usize) -> Vec<usize> {
    (0..len).map(|i| 2 + (i * 37) % 1000).collect()
}

fn bench_gemm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gemm");
    for n in [64usize, 256] {
        let a: Vec<f64> = (0..n * n).map(|i| (i % 7) as f64 * 0.1).collect();
        let b = a.clone();
        let mut out = vec![0.0; n * n];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, &n| {
            bch.iter(|| gemm(n, n, n, black_box(&a), false, black_box(&b), false, &mut out, false))
        });
    }
    g.finish();
}

fn bench_forward(c: &mut Criterion) {
    let params = small_model(1);
    let tokens = prompt(12);
    c.bench_function("forward_full_12", |b| b.iter(|| forward_full(black_box(&tokens), &params).unwrap()));
    c.bench_function("forward_step_12", |b| {
        b.iter(|| {
            let mut cache = KvCache::new(params.config());
            for &t in &tokens {
                black_box(forward_step(t, &mut cache, &params).unwrap());
            }
        })
    });
}

fn bench_grafted(c: &mut Criterion) {
    let mut reg = Registry::new();
    reg.register("PRE", small_model(1)).unwrap();
    reg.register("SFT", small_model(2)).unwrap();
    let tokens = prompt(12);
    let ann = PromptAnnotation {
        length: tokens.len(),
        first_entity: Some((0, 2)),
    };
    let scheme = builtin_suite("position").unwrap().into_iter().find(|s| s.name == "FE+LT").unwrap();
    let mask = build_mask(&scheme, &ann, &reg).unwrap();
    c.bench_function("grafted_dist_fe_lt_12", |b| {
        b.iter(|| grafted_next_token_dist(black_box(&tokens), &mask, &reg).unwrap())
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let base = small_model(3);
    let docs: Vec<Vec<usize>> = (0..32).map(|i| prompt(20 + i % 8).into_iter().map(|t| (t + i) % 1200).collect()).collect();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    g.bench_function("epoch_32_docs", |b| b.iter(|| train(black_box(&docs), &base, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_gemm, bench_forward, bench_grafted, bench_train_epoch);
criterion_main!(benches);
