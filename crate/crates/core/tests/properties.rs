use std::collections::BTreeSet;

use nalgebra::DMatrix;
use pal_core::datasets::{augment, concentric_circles, gaussian_mixture};
use pal_core::graph::*;
use pal_core::kernel::{positive_eigen_count, KernelConfig};
use pal_core::labels::LabelMatrix;
use pal_core::losses::*;
use pal_core::oracles::*;
use pal_core::probe::{fit_linear_probe, probe_error};
use pal_core::Embedding;
use proptest::prelude::*;

fn labels_strategy(max_n: usize, max_c: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_c).prop_flat_map(move |c| prop::collection::vec(0..c, 1..=max_n))
}

fn dense_strategy(n: usize, k: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * k).prop_map(move |v| DMatrix::from_vec(n, k, v))
}

fn graph_strategy(n: usize) -> impl Strategy<Value = SimilarityGraph> {
    prop::collection::vec(prop::option::of(-1.0f64..1.0), n * (n + 1) / 2).prop_map(move |vals| {
        let mut g = SimilarityGraph::new(n);
        let mut it = vals.into_iter();
        for i in 0..n {
            for j in i..n {
                if let Some(v) = it.next().flatten() {
                    g.set(i, j, v).unwrap();
                }
            }
        }
        g
    })
}

fn templates_from(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut seen = BTreeSet::new();
    labels
        .iter()
        .enumerate()
        .filter(|(_, &c)| seen.insert(c))
        .map(|(i, &c)| (i, c))
        .collect()
}

fn run_captcha(labels: &[usize], classes: usize, batch: usize, seed: u64, mut check: impl FnMut(&OracleState)) -> OracleState {
    let mut s = OracleState::new(labels.len(), classes, seed).with_exemplars(vec![None; classes]);
    let oracle = CaptchaOracle::new(batch);
    let mut lab = SimulatedLabeler::with_classes(labels.to_vec(), classes).unwrap();
    loop {
        match oracle.next(&mut s) {
            Ok(b) => {
                let a = lab.answer(&b).unwrap();
                s.ingest(&b, &a).unwrap();
                check(&s);
            }
            Err(pal_core::PalError::Exhausted) => return s,
            Err(e) => panic!("{e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_entries_symmetric(ops in prop::collection::vec((0usize..6, 0usize..6, -3.0f64..3.0), 0..30)) {
        let mut g = SimilarityGraph::new(6);
        for &(i, j, v) in &ops {
            g.set(i, j, v).unwrap();
        }
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
        let d = g.dense();
        prop_assert_eq!(d.transpose(), d);
        prop_assert!(g.set(6, 0, 1.0).is_err());
    }

    #[test]
    fn unknown_differs_from_known_zero(i in 0usize..4, j in 0usize..4) {
        let mut g = SimilarityGraph::new(4);
        g.set(i, j, 0.0).unwrap();
        prop_assert_eq!(g.get(i, j), EntryState::Known(0.0));
        prop_assert_eq!(g.dense(), DMatrix::zeros(4, 4));
        prop_assert_eq!(g.to_contrastive().get(j, i), EntryState::Known(-1.0));
    }

    #[test]
    fn recover_round_trip(labels in labels_strategy(20, 5)) {
        let y = LabelMatrix::from_labels_auto(&labels);
        let g = build_sup_graph(&y).unwrap();
        prop_assert_eq!(recover_labels(&g, &templates_from(&labels)).unwrap().to_labels().unwrap(), labels);
    }

    #[test]
    fn sup_graph_spectrum_is_class_sizes(labels in labels_strategy(30, 5)) {
        let y = LabelMatrix::from_labels_auto(&labels);
        let g = build_sup_graph(&y).unwrap();
        let mut eig: Vec<f64> = g.dense().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let mut sizes: Vec<f64> = y.class_sizes().iter().filter(|&&s| s > 0).map(|&s| s as f64).collect();
        sizes.sort_by(|a, b| b.total_cmp(a));
        for (k, e) in eig.iter().enumerate() {
            let want = sizes.get(k).copied().unwrap_or(0.0);
            prop_assert!((e - want).abs() < 1e-9, "eigenvalue {} = {} want {}", k, e, want);
        }
        let distinct: BTreeSet<_> = labels.iter().collect();
        prop_assert_eq!(connected_components(&g).count, distinct.len());
    }

    #[test]
    fn deduction_monotone_and_idempotent(
        labels in labels_strategy(10, 3),
        answers in prop::collection::vec((0usize..10, 0usize..3, any::<bool>()), 0..25),
    ) {
        let classes = labels.iter().max().unwrap() + 1;
        let n = labels.len();
        let mut q = Membership::new(n, classes);
        let mut g = SimilarityGraph::new(n);
        let mut known_before: Vec<(usize, usize)> = Vec::new();
        for &(i, c, yes) in &answers {
            let (i, c) = (i % n, c % classes);
            if q.is_determined(i) {
                continue;
            }
            if yes && labels[i] == c {
                q.confirm(i, c).unwrap();
            } else if labels[i] != c {
                q.set(i, c, Member::No).unwrap();
            }
            deduce_from_membership(&q, &mut g).unwrap();
            for &(a, b) in &known_before {
                prop_assert!(g.get(a, b).is_known());
            }
            known_before = g.known().map(|(a, b, _)| (a, b)).collect();
        }
        let again = deduce_from_membership(&q, &mut g).unwrap();
        prop_assert!(again.new_entries.is_empty());
        for (i, j, v) in g.known() {
            prop_assert_eq!(v, if labels[i] == labels[j] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn layouts_permutation_equivalent(n0 in 1usize..5, v in 2usize..4, e in 1usize..3) {
        let sizes = |l: Layout| {
            let layout = AugmentationLayout::new(n0, v, e, l).unwrap();
            let mut s = connected_components(&build_ssl_graph(&layout).unwrap()).sizes();
            s.sort_unstable();
            s
        };
        prop_assert_eq!(sizes(Layout::Contiguous), sizes(Layout::Strided));
        prop_assert_eq!(sizes(Layout::Contiguous), vec![v * e; n0]);
    }

    #[test]
    fn mix_is_entrywise_blend(
        n0 in 1usize..4,
        alpha in 0.0f64..=1.0,
        mask in prop::collection::vec(any::<bool>(), 8),
        labels in prop::collection::vec(0usize..3, 8),
    ) {
        let layout = AugmentationLayout::new(n0, 2, 1, Layout::Contiguous).unwrap();
        let n = layout.total();
        let ssl = build_ssl_graph(&layout).unwrap();
        let y = LabelMatrix::masked(&labels[..n], 3, &mask[..n]).unwrap();
        let mixed = mix_graphs(&ssl, &y, alpha).unwrap().dense();
        let yh = y.one_hot();
        let want = ssl.dense() * (1.0 - alpha) + &yh * yh.transpose() * alpha;
        prop_assert!((mixed - want).abs().max() <= 1e-12);
    }

    #[test]
    fn vic2_minus_spectral_is_graph_norm(z in dense_strategy(5, 3), g in graph_strategy(5)) {
        let z = Embedding::new(z).unwrap();
        let lhs = vic2_loss(&z, &g).unwrap() - spectral_graph_loss(&z, &g).unwrap();
        let want = g.dense().norm_squared();
        prop_assert!((lhs - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn simclr_row_scale_invariant(
        z in dense_strategy(4, 3),
        scale in prop::collection::vec(0.1f64..10.0, 4),
        g in graph_strategy(4),
        tau in 0.1f64..2.0,
    ) {
        prop_assume!(z.row_iter().all(|r| r.norm() > 1e-3));
        let scaled = DMatrix::from_fn(4, 3, |i, c| z[(i, c)] * scale[i]);
        let a = simclr_graph_loss(&Embedding::new(z).unwrap(), &g, tau, true).unwrap();
        let b = simclr_graph_loss(&Embedding::new(scaled).unwrap(), &g, tau, true).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn barlow_twins_column_scale_invariant(
        z in dense_strategy(4, 3),
        scale in prop::collection::vec(0.1f64..10.0, 3),
        g in graph_strategy(4),
    ) {
        prop_assume!(z.column_iter().all(|c| c.norm() > 1e-3));
        let scaled = DMatrix::from_fn(4, 3, |i, c| z[(i, c)] * scale[c]);
        let a = barlow_twins_graph_loss(&Embedding::new(z).unwrap(), &g).unwrap();
        let b = barlow_twins_graph_loss(&Embedding::new(scaled).unwrap(), &g).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn graph_text_round_trip(g in graph_strategy(6)) {
        prop_assert_eq!(read_graph(&write_graph(&g)).unwrap(), g);
    }

    #[test]
    fn probe_absorbs_rotation_and_scaling(
        labels in prop::collection::vec(0usize..3, 6..20),
        angle in 0.0f64..std::f64::consts::TAU,
        diag in prop::collection::vec(0.2f64..5.0, 3),
    ) {
        let y = LabelMatrix::from_labels(&labels, 3).unwrap();
        let base = Embedding::new(y.one_hot()).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let r = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
        let moved = Embedding::new(y.one_hot() * r * d).unwrap();
        let err = |z: &Embedding| {
            let p = fit_linear_probe(z, &y, 1e-12).unwrap();
            probe_error(&p, z.matrix(), &y).unwrap().mse
        };
        prop_assert!((err(&base) - err(&moved)).abs() <= 1e-9);
    }

    #[test]
    fn regularization_never_adds_rank(seed in 0u64..1000, l1 in 0.0f64..0.5, dl in 0.0f64..0.5) {
        let ds = gaussian_mixture(24, 3, 0.3, seed).unwrap();
        let g = build_partial_sup_graph(&LabelMatrix::masked(&ds.hidden_labels, 3, &(0..24).map(|i| i % 2 == 0).collect::<Vec<_>>()).unwrap());
        let cfg = |ridge| KernelConfig { ridge, jitter: 1e-6, bandwidth: 1.0, embed_dim: 4 };
        let low = positive_eigen_count(&g, &ds.x, &cfg(l1)).unwrap();
        let high = positive_eigen_count(&g, &ds.x, &cfg(l1 + dl)).unwrap();
        prop_assert!(high <= low);
    }

    #[test]
    fn datasets_reproducible(seed in any::<u64>(), n in 4usize..40, c in 2usize..5) {
        prop_assert_eq!(concentric_circles(n, c, 0.02, seed).unwrap(), concentric_circles(n, c, 0.02, seed).unwrap());
        prop_assert_eq!(gaussian_mixture(n, c, 0.3, seed).unwrap(), gaussian_mixture(n, c, 0.3, seed).unwrap());
    }

    #[test]
    fn noiseless_circles_radially_separable(seed in any::<u64>(), n in 4usize..60, c in 2usize..6) {
        let ds = concentric_circles(n, c, 0.0, seed).unwrap();
        for i in 0..n {
            let r = ds.x.row(i).norm();
            let nearest = ((r * c as f64).round() as usize).saturating_sub(1);
            prop_assert_eq!(nearest, ds.hidden_labels[i]);
        }
    }

    #[test]
    fn augmented_ssl_components(seed in any::<u64>(), n in 1usize..12, v in 2usize..4, e in 1usize..3) {
        let ds = concentric_circles(n.max(2), 2, 0.02, seed).unwrap();
        let (aug, layout) = augment(&ds, v, e, 0.05, seed).unwrap();
        prop_assert_eq!(aug.n(), ds.n() * v * e);
        prop_assert_eq!(connected_components(&build_ssl_graph(&layout).unwrap()).count, ds.n());
    }

    #[test]
    fn zero_noise_labeler_identity(labels in labels_strategy(12, 3), seed in any::<u64>()) {
        let n = labels.len();
        let mut s = OracleState::new(n, 3, seed);
        let b = passive_supervised_oracle(&mut s, 40);
        let clean = SimulatedLabeler::new(labels.clone()).answer(&b).unwrap();
        let mut noisy = NoisyLabeler::new(SimulatedLabeler::new(labels), 0.0, NoiseMode::PerAnswer, seed).unwrap();
        prop_assert_eq!(noisy.answer(&b).unwrap(), clean);
    }

    #[test]
    fn nnclr_one_positive_per_member(z in dense_strategy(8, 2), picks in prop::collection::btree_set(0usize..8, 2..8)) {
        let mut s = OracleState::new(8, 1, 0);
        s.embedding_snapshot = Some(Embedding::new(z).unwrap());
        let batch: Vec<usize> = picks.into_iter().collect();
        let b = nnclr_oracle(&mut s, &batch).unwrap();
        let Query::Pairs { pairs, auto_positive } = &b.query else { panic!("pairs expected") };
        prop_assert!(auto_positive);
        prop_assert_eq!(pairs.len(), batch.len());
        for (&(nn, j), &want) in pairs.iter().zip(&batch) {
            prop_assert_eq!(j, want);
            prop_assert!(nn != j && batch.contains(&nn));
        }
        s.ingest(&b, &b.auto_answers().unwrap()).unwrap();
        for &(nn, j) in pairs {
            prop_assert_eq!(s.graph.get(j, nn), EntryState::Known(1.0));
        }
    }

    #[test]
    fn captcha_sound_and_balanced(
        per_class in 1usize..6,
        classes in 2usize..4,
        batch in 1usize..5,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = (0..per_class * classes).map(|i| (i * 7 + (seed % 97) as usize) % classes).collect();
        let mut counts = vec![0; classes];
        for &y in &labels {
            counts[y] += 1;
        }
        prop_assume!(counts.iter().all(|&k| k == per_class));
        let s = run_captcha(&labels, classes, batch, seed, |s| {
            let yes = s.membership.yes_counts();
            let spread = yes.iter().max().unwrap() - yes.iter().min().unwrap();
            assert!(spread <= batch, "{yes:?}");
            for (i, j, v) in s.graph.known() {
                assert_eq!(v, if labels[i] == labels[j] { 1.0 } else { 0.0 });
            }
            s.membership.validate().unwrap();
        });
        prop_assert!(s.queries_made as usize <= labels.len() * classes);
        prop_assert_eq!(s.graph, build_sup_graph(&LabelMatrix::from_labels(&labels, classes).unwrap()).unwrap());
    }
}

/// Every label vector with N <= 8 and C <= 3.
#[test]
fn captcha_exhaustive_small() {
    let mut worst_ratio: f64 = 0.0;
    for classes in 1..=3usize {
        for n in 1..=8usize {
            let total = classes.pow(n as u32);
            for code in 0..total {
                let mut rest = code;
                let labels: Vec<usize> = (0..n)
                    .map(|_| {
                        let y = rest % classes;
                        rest /= classes;
                        y
                    })
                    .collect();
                let s = run_captcha(&labels, classes, 3, code as u64, |_| {});
                let used = s.queries_made as usize;
                assert!(used <= n * classes, "{labels:?} used {used}");
                assert_eq!(s.graph, build_sup_graph(&LabelMatrix::from_labels(&labels, classes).unwrap()).unwrap());
                worst_ratio = worst_ratio.max(used as f64 / n as f64);
            }
        }
    }
    assert!(worst_ratio <= 3.0);
}
