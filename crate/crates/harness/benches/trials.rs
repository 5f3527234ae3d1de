use criterion::{criterion_group, criterion_main, Criterion};
use pal_core::parallel::Execution;
use pal_harness::{run_pal, RunConfig};

fn fig4_config(execution: Execution) -> RunConfig {
    RunConfig {
        trials: 8,
        checkpoints: Some((0..=400).step_by(40).collect()),
        execution,
        ..RunConfig::default()
    }
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_pal");
    group.sample_size(10);
    for (name, mode) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        let cfg = fig4_config(mode);
        group.bench_function(name, |b| b.iter(|| run_pal(&cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
