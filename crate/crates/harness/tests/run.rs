use pal_core::oracles::{OracleState, QueryBatch, SimulatedLabeler};
use pal_core::parallel::Execution;
use pal_harness::config::{GraphMode, OracleKind, ProbeLabels, SolverKind};
use pal_harness::export::{aggregate_csv, parse_manifest, write_run};
use pal_harness::manifest::TrialStatus;
use pal_harness::run::{ensure_success, run_with_labeler, CheckpointView, TrialData, TrialObserver};
use pal_harness::sweep::{compare_contrastive, sweep_missing_entries, sweep_mixing, sweep_noise};
use pal_harness::{run_pal, HarnessError, RunConfig};

fn small(n: usize, classes: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.dataset.n = n;
    c.dataset.classes = classes;
    c.dataset.test_size = 200;
    c
}

#[test]
fn baseline_only_gives_one_row() {
    let mut c = small(40, 4);
    c.checkpoints = Some(vec![0]);
    let m = run_pal(&c).unwrap();
    assert_eq!(m.aggregate.len(), 1);
    let row = &m.aggregate[0];
    assert_eq!(row.queries, 0);
    assert_eq!(row.trials, 1);
    assert_eq!(row.std_mse, None);
    // empty graph: zero embedding, constant probe on balanced classes
    let rec = &m.trials[0].checkpoints[0];
    assert!((rec.train.mse - 3.0 / 16.0).abs() < 1e-12);
    assert_eq!(rec.train.zero_one, 0.75);
    assert_eq!(rec.component_count, 40);
    assert_eq!(rec.known_entry_fraction, 0.0);
}

#[test]
fn identical_config_identical_manifest() {
    let mut c = small(40, 4);
    c.trials = 3;
    c.checkpoints = Some(vec![0, 20, 40, 80]);
    let a = run_pal(&c).unwrap().without_timing();
    let b = run_pal(&c).unwrap().without_timing();
    assert_eq!(a.to_json(), b.to_json());
    c.execution = Execution::Sequential;
    let s = run_pal(&c).unwrap().without_timing();
    assert_eq!(s.trials, a.trials);
    assert_eq!(s.aggregate, a.aggregate);
    c.seed = 1;
    assert_ne!(run_pal(&c).unwrap().trials, a.trials);
}

#[test]
fn knowledge_is_monotone_and_checkpoints_respected() {
    for kind in [OracleKind::Captcha, OracleKind::PassiveSupervised] {
        let mut c = small(30, 3);
        c.trials = 2;
        c.oracle.kind = Some(kind);
        c.checkpoints = Some((0..=120).step_by(15).collect());
        let m = run_pal(&c).unwrap();
        for t in &m.trials {
            assert_eq!(t.checkpoints.len(), 9);
            for w in t.checkpoints.windows(2) {
                assert!(w[1].known_entry_fraction >= w[0].known_entry_fraction);
                assert!(w[1].queries_made >= w[0].queries_made);
            }
            for r in &t.checkpoints {
                let at_end = Some(r.queries_made) == t.exhausted_at;
                assert!(r.carried || at_end || r.queries_made == r.checkpoint, "{kind:?} {r:?}");
                assert_eq!(r.answers_used, r.queries_made);
            }
        }
    }
}

#[test]
fn exhaustion_carries_final_metrics() {
    let mut c = small(12, 2);
    c.checkpoints = Some(vec![0, 5, 100, 150, 200]);
    let m = run_pal(&c).unwrap();
    let t = &m.trials[0];
    let q = t.exhausted_at.expect("a 12-node graph is finished long before 200 queries");
    assert!(q <= 24);
    assert!(m.warnings.iter().any(|w| w.contains("exhausted")));
    let cp = &t.checkpoints;
    assert_eq!(cp.len(), 5);
    assert!(!cp[2].carried);
    assert!(cp[3].carried && cp[4].carried);
    assert_eq!(cp[2].queries_made, q);
    assert_eq!(cp[4].test, cp[2].test);
    assert_eq!(cp[4].checkpoint, 200);
    // complete graph: one component per class
    assert_eq!(cp[4].component_count, 2);
    assert_eq!(cp[4].known_entry_fraction, 1.0);
}

#[test]
fn export_contract() {
    let mut c = small(20, 2);
    c.trials = 2;
    c.checkpoints = Some(vec![0, 10, 20]);
    let m = run_pal(&c).unwrap();
    let csv = aggregate_csv(&m).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "queries,mean_mse,std_mse,mean_zero_one,std_zero_one,mean_components");
    assert_eq!(lines.len() - 1, 3);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(parse_manifest(&m.to_json()).unwrap(), m);

    let dir = tempfile::tempdir().unwrap();
    let files = write_run(&m, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let back = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(parse_manifest(&back).unwrap(), m);
}

#[test]
fn diverging_trials_are_excluded_and_reported() {
    let mut c = small(20, 2);
    c.graph.mode = GraphMode::Supervised;
    c.solver.kind = SolverKind::Sgd;
    c.solver.sgd.rate = 1e12;
    c.solver.sgd.steps = 50;
    c.trials = 2;
    let m = run_pal(&c).unwrap();
    assert_eq!(m.failed_trials, 2);
    assert!(matches!(m.trials[0].status, TrialStatus::Failed { .. }));
    assert_eq!(m.aggregate[0].trials, 0);
    assert_eq!(m.aggregate[0].mean_mse, None);
    let err = ensure_success(&m).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_errors_map_to_exit_code_two() {
    let mut c = small(20, 2);
    c.trials = 0;
    let e = run_pal(&c).unwrap_err();
    assert!(matches!(e, HarnessError::Config(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn full_supervised_graph_separates_circles() {
    let mut c = small(100, 4);
    c.graph.mode = GraphMode::Supervised;
    let m = run_pal(&c).unwrap();
    let r = &m.trials[0].checkpoints[0];
    assert_eq!(r.train.zero_one, 0.0);
    assert!(r.test.zero_one <= 0.02, "{}", r.test.zero_one);
    assert_eq!(r.component_count, 4);
}

#[test]
fn strict_probe_without_labels_scores_zero() {
    let mut c = small(20, 2);
    c.probe.labels = ProbeLabels::Deduced;
    c.checkpoints = Some(vec![0, 20]);
    let m = run_pal(&c).unwrap();
    let cp = &m.trials[0].checkpoints;
    assert!((cp[0].train.mse - 0.5).abs() < 1e-12);
    assert_eq!(cp[0].train.zero_one, 0.5);
    assert!(cp[1].train.zero_one < 0.5);
}

#[derive(Default)]
struct Counter {
    batches: usize,
    answered: usize,
    checkpoints: Vec<u64>,
    points: usize,
}

impl TrialObserver for Counter {
    fn batch_opened(&mut self, _b: &QueryBatch, _s: &OracleState) {
        self.batches += 1;
    }
    fn answered(&mut self, _b: &QueryBatch, _s: &OracleState) {
        self.answered += 1;
    }
    fn checkpoint(&mut self, v: &CheckpointView<'_>) {
        self.checkpoints.push(v.record.checkpoint);
        self.points = v.embedding.nrows();
        assert_eq!(v.x.nrows(), v.components.assignment.len());
    }
}

#[test]
fn external_labeler_reproduces_simulated_run() {
    let mut c = small(40, 4);
    c.checkpoints = Some((0..=160).step_by(10).collect());
    let simulated = run_pal(&c).unwrap().without_timing();
    let data = TrialData::generate(&c.resolve().unwrap(), simulated.trial_seeds[0]).unwrap();
    let mut labeler = SimulatedLabeler::with_classes(data.train.hidden_labels.clone(), 4).unwrap();
    let mut obs = Counter::default();
    let external = run_with_labeler(&c, &mut labeler, &mut obs).unwrap().without_timing();
    assert_eq!(external.to_json(), simulated.to_json());
    assert_eq!(obs.batches, obs.answered);
    let evaluated: Vec<u64> = external.trials[0]
        .checkpoints
        .iter()
        .filter(|r| !r.carried)
        .map(|r| r.checkpoint)
        .collect();
    assert_eq!(obs.checkpoints, evaluated);
    assert_eq!(obs.points, 40);

    c.trials = 2;
    assert!(run_with_labeler(&c, &mut labeler, &mut Counter::default()).is_err());
}

#[test]
fn nnclr_and_pruning_oracles_run() {
    for kind in [OracleKind::Nnclr, OracleKind::Pruning] {
        let mut c = small(24, 3);
        c.oracle.kind = Some(kind);
        c.oracle.batch_size = 6;
        c.checkpoints = Some(vec![0, 12, 24, 36]);
        let m = run_pal(&c).unwrap();
        ensure_success(&m).unwrap();
        let last = m.trials[0].checkpoints.last().unwrap();
        assert!(last.known_entry_fraction > 0.0, "{kind:?}");
    }
}

#[test]
fn passive_ssl_oracle_counts_no_answers() {
    let mut c = small(20, 2);
    c.dataset.views = 2;
    c.oracle.kind = Some(OracleKind::PassiveSsl);
    c.checkpoints = Some(vec![0, 5, 10]);
    let m = run_pal(&c).unwrap();
    let cp = &m.trials[0].checkpoints;
    assert_eq!(cp[2].queries_made, 10);
    assert_eq!(cp[2].answers_used, 0);
    assert_eq!(cp[2].component_count, 30);
}

#[test]
fn contrastive_pair_on_empty_graph_identical() {
    let mut c = small(30, 3);
    c.checkpoints = Some(vec![0, 30]);
    let r = compare_contrastive(&c).unwrap();
    let plain = &r.run("plain").unwrap().trials[0].checkpoints;
    let contrastive = &r.run("contrastive").unwrap().trials[0].checkpoints;
    assert_eq!(plain[0].test, contrastive[0].test);
    // same oracle trace
    assert_eq!(plain[1].known_entry_fraction, contrastive[1].known_entry_fraction);
    assert_eq!(plain[1].component_count, contrastive[1].component_count);
}

#[test]
fn missing_sweep_endpoints() {
    let mut c = small(30, 3);
    c.trials = 2;
    let r = sweep_missing_entries(&c, &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(r.rows[0].mean_components, Some(3.0));
    assert_eq!(r.rows[2].mean_components, Some(30.0));
    let mut sup = c.clone();
    sup.graph.mode = GraphMode::Supervised;
    let base = run_pal(&sup).unwrap();
    assert_eq!(r.runs[0].manifest.aggregate, base.aggregate);
    assert!(r.spearman.is_some());
}

#[test]
fn noise_sweep_level_zero_is_clean_baseline() {
    let mut c = small(30, 3);
    c.trials = 2;
    let r = sweep_noise(&c, &[0.0, 0.5]).unwrap();
    let mut sup = c.clone();
    sup.graph.mode = GraphMode::Supervised;
    let base = run_pal(&sup).unwrap();
    assert_eq!(r.runs[0].manifest.without_timing().trials, base.without_timing().trials);
    assert_eq!(r.runs[0].manifest.trials[0].corrupted_labels, 0);
    assert_eq!(r.runs[1].manifest.trials[0].corrupted_labels, 15);
    assert!(r.rows[1].mean_zero_one.unwrap() <= 0.75);
}

#[test]
fn mixing_alpha_zero_matches_ssl() {
    let mut c = small(20, 2);
    c.dataset.views = 2;
    let r = sweep_mixing(&c, &[0.0, 1.0], &[Some(10), None]).unwrap();
    assert_eq!(r.runs.len(), 2 + 4);
    let ssl = &r.run("ssl").unwrap().trials[0].checkpoints[0];
    for label in ["alpha0_labels10", "alpha0_labels40"] {
        let mixed = &r.run(label).unwrap().trials[0].checkpoints[0];
        assert_eq!(mixed.test, ssl.test);
        assert_eq!(mixed.train, ssl.train);
    }
    // every label revealed at alpha 1 is the supervised graph
    let sup = &r.run("supervised").unwrap().trials[0].checkpoints[0];
    let full = &r.run("alpha1_labels40").unwrap().trials[0].checkpoints[0];
    assert_eq!(full.test, sup.test);

    c.dataset.views = 1;
    assert!(sweep_mixing(&c, &[0.0], &[None]).is_err());
}
