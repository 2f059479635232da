use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssgpfa::kalman::RobustConfig;
use ssgpfa::ssgpfa::{Engine, Mode, OnlineScorer};
use ssgpfa_bench::workload;

fn online_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("online_step");
    for (dims, latents) in [(10, 2), (38, 4), (100, 8)] {
        let w = workload(dims, latents, 512, Mode::Orthogonal);
        for engine in [Engine::PerLatent, Engine::Joint] {
            let id = BenchmarkId::new(format!("{engine:?}"), format!("D{dims}_K{latents}"));
            group.bench_function(id, |b| {
                let mut scorer = OnlineScorer::with_engine(&w.model, RobustConfig::default(), engine).unwrap();
                let mut t = 0usize;
                b.iter(|| {
                    let i = t % w.values.len();
                    let p = scorer.step(t as f64, &w.values[i]).unwrap();
                    t += 1;
                    p
                });
            });
        }
    }
    group.finish();
}

criterion_group!(benches, online_step);
criterion_main!(benches);
