use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pal_core::datasets::concentric_circles;
use pal_core::graph::build_sup_graph;
use pal_core::kernel::{solve_embedding, KernelConfig};
use pal_core::oracles::{CaptchaOracle, Labeler, OracleState, SimulatedLabeler};
use pal_core::parallel::Execution;
use pal_core::rng::trial_seed;
use pal_core::PalError;

fn captcha_trial(seed: u64) -> u64 {
    let ds = concentric_circles(60, 4, 0.02, seed).unwrap();
    let mut s = OracleState::new(ds.n(), 4, seed).with_exemplars(vec![None; 4]);
    let mut lab = SimulatedLabeler::with_classes(ds.hidden_labels.clone(), 4).unwrap();
    let oracle = CaptchaOracle::new(10);
    loop {
        match oracle.next(&mut s) {
            Ok(b) => {
                let a = lab.answer(&b).unwrap();
                s.ingest(&b, &a).unwrap();
            }
            Err(PalError::Exhausted) => return s.queries_made,
            Err(e) => panic!("{e}"),
        }
    }
}

fn solve_trial(seed: u64) -> f64 {
    let ds = concentric_circles(100, 4, 0.02, seed).unwrap();
    let g = build_sup_graph(&ds.labels()).unwrap();
    let cfg = KernelConfig {
        jitter: 1e-3,
        ..KernelConfig::default()
    };
    solve_embedding(&g, &ds.x, &cfg).unwrap().eigenvalues[0]
}

fn trials(c: &mut Criterion) {
    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    for mode in [Execution::Sequential, Execution::Parallel] {
        let name = format!("{mode:?}").to_lowercase();
        group.bench_with_input(BenchmarkId::new("captcha_monte_carlo", &name), &mode, |b, &m| {
            b.iter(|| m.map(32, |t| captcha_trial(trial_seed(7, t as u64))))
        });
        group.bench_with_input(BenchmarkId::new("kernel_solve", &name), &mode, |b, &m| {
            b.iter(|| m.map(16, |t| solve_trial(trial_seed(7, t as u64))))
        });
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
