use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use orbit_twistor::continuation::random_triple;
use orbit_twistor::{metric, par};

fn gram_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("metric_gram");
    group.sample_size(10);
    for n in [2usize, 3] {
        let triples: Vec<_> = (0..64).map(|_| random_triple(&mut rng, n)).collect();
        group.bench_with_input(BenchmarkId::new("parallel", n), &triples, |b, ts| {
            b.iter(|| par::map(ts.clone(), |t| metric::metric_gram(&t).map(|g| g.signature)))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &triples, |b, ts| {
            b.iter(|| par::map_seq(ts.clone(), |t| metric::metric_gram(&t).map(|g| g.signature)))
        });
    }
    group.finish();
}

criterion_group!(benches, gram_batch);
criterion_main!(benches);
