use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refinery_core::fuzzy::{shingle, tokenize, LshParams, MinHasher};
use refinery_core::semantic::{kmeans_cluster, KMeansConfig};
use refinery_core::text::normalize_text;

const WORDS: &[&str] = &[
    "the", "council", "met", "on", "Tuesday", "to", "discuss", "bridge", "repairs", "and", "budget,", "while",
    "residents", "asked", "questions!", "市政府", "讨论了", "维修费用", "在", "会议上。",
];

fn text(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn normalize(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("normalize_text");
    for words in [100, 1000] {
        let t = text(&mut rng, words);
        group.throughput(Throughput::Bytes(t.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(words), &t, |b, t| b.iter(|| normalize_text(black_box(t))));
    }
    group.finish();
}

fn minhash(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = LshParams::default();
    let hasher = MinHasher::from_params(&params);
    let mut group = c.benchmark_group("minhash_signature");
    for words in [100, 500] {
        let shingles = shingle(&tokenize(&text(&mut rng, words)), params.shingle_n);
        group.bench_with_input(BenchmarkId::from_parameter(words), &shingles, |b, s| {
            b.iter(|| hasher.signature(black_box(s).iter().map(String::as_str)))
        });
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec<f32>> = (0..2000).map(|_| (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let cfg = KMeansConfig { max_iters: 10, ..KMeansConfig::default() };
    c.bench_function("kmeans_2000x64_k8", |b| b.iter(|| kmeans_cluster(black_box(&points), 8, 7, &cfg)));
}

criterion_group!(benches, normalize, minhash, kmeans);
criterion_main!(benches);
