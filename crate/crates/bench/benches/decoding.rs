use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use lqre_bench::fixture;
use lqre_core::decoding::{beam, greedy, top_p_sample_with};

fn decoding(c: &mut Criterion) {
    let f = fixture(32);
    let input = f.episodes(1).remove(0).question_input;

    c.bench_function("greedy", |b| b.iter(|| greedy(&f.pq, black_box(&input))));

    let mut g = c.benchmark_group("beam");
    for k in [1, 4, 8, 16] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| beam(&f.pq, black_box(&input), k))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("top_p_8_samples");
    for p in [0.5, 0.95, 1.0] {
        g.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, &p| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| top_p_sample_with(&f.pq, black_box(&input), p, 8, &mut rng))
        });
    }
    g.finish();
}

criterion_group!(benches, decoding);
criterion_main!(benches);
