use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssgpfa::ssgpfa::{fit_em, EmConfig, Mode};
use ssgpfa_bench::workload;

/// One EM iteration (E-step, M-step and the closing likelihood evaluation).
fn em_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("em_iteration");
    group.sample_size(10);
    for mode in [Mode::Orthogonal, Mode::Unconstrained] {
        for length in [500, 1000] {
            let w = workload(20, 3, length, mode);
            let mut config = EmConfig::new(w.model.latents().to_vec(), mode);
            config.max_iters = 1;
            config.tol = 0.0;
            group.bench_function(BenchmarkId::new(mode.to_string(), format!("T{length}")), |b| {
                b.iter(|| fit_em(&w.times, &w.values, &config).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, em_iteration);
criterion_main!(benches);
