use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use llrp_core::harness::{run_batch, run_seeds};
use llrp_core::instance::{Customer, Depot};
use llrp_core::{Instance, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(nc: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(nc as u64);
    let depots = (0..5)
        .map(|k| Depot {
            id: k + 1,
            x: rng.gen_range(0.0..100.0),
            y: rng.gen_range(0.0..100.0),
        })
        .collect();
    let customers = (0..nc)
        .map(|k| Customer {
            id: k as u32 + 1,
            x: rng.gen_range(0.0..100.0),
            y: rng.gen_range(0.0..100.0),
            demand: rng.gen_range(5..=25) as f64,
        })
        .collect();
    Instance::new(format!("bench-{nc}"), depots, customers, 120.0, nc / 6, 3, 20).unwrap()
}

fn batch(c: &mut Criterion) {
    let cfg = SearchConfig {
        max_generations: 100,
        population_size: 10,
        ..SearchConfig::default()
    };
    let seeds = run_seeds(1, 8);
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for nc in [20, 50] {
        let inst = instance(nc);
        group.bench_with_input(BenchmarkId::new("sequential", nc), &inst, |b, inst| {
            b.iter(|| run_batch(inst, &cfg, &seeds, false))
        });
        group.bench_with_input(BenchmarkId::new("parallel", nc), &inst, |b, inst| {
            b.iter(|| run_batch(inst, &cfg, &seeds, true))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
