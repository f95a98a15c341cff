use proptest::prelude::*;

use dppal::diversity::{fit_subgraph_vocab, ibad_ibmd, normalize, subgraph_counts, subgraph_keys, token_subgraph_features};
use dppal::dpp::{brute_force_map, greedy_map, SelectionKernel};
use dppal::parser::{decode_cle_with, tree_score, ArcScoreTable, ParseTree, RootMode};
use dppal::structured::{arc_marginals_with, enumerate_arborescences, enumerate_marginals, log_partition_with, ArcWeights};

fn table_strategy(max_n: usize) -> impl Strategy<Value = ArcScoreTable> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-4.0f64..4.0, (n + 1) * n).prop_map(move |s| ArcScoreTable::from_log_scores(n, s).unwrap())
    })
}

fn mode_strategy() -> impl Strategy<Value = RootMode> {
    prop_oneof![Just(RootMode::Multi), Just(RootMode::Single)]
}

fn unit_rows(count: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), count).prop_map(|rows| rows.into_iter().map(normalize).collect())
}

fn random_tree() -> impl Strategy<Value = ParseTree> {
    // Heads drawn so that token m attaches to some earlier position, which
    // always yields a tree; relations from a small inventory.
    (1usize..12).prop_flat_map(|n| {
        let heads = (1..=n).map(|m| 0..m).collect::<Vec<_>>();
        let rels = prop::collection::vec(prop::sample::select(vec!["nsubj", "obj", "det", "amod", "case"]), n);
        (heads, rels).prop_map(|(h, r)| ParseTree::new(h, r.into_iter().map(String::from).collect()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn cle_finds_the_best_tree(table in table_strategy(5), mode in mode_strategy()) {
        let n = table.n();
        let best = enumerate_arborescences(n)
            .unwrap()
            .filter(|t| mode == RootMode::Multi || t.iter().filter(|&&h| h == 0).count() == 1)
            .map(|t| tree_score(&table, &t).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let got = decode_cle_with(&table, mode);
        if mode == RootMode::Single {
            prop_assert_eq!(got.iter().filter(|&&h| h == 0).count(), 1);
        }
        prop_assert!((tree_score(&table, &got).unwrap() - best).abs() < 1e-9);
    }

    #[test]
    fn matrix_tree_matches_enumeration(table in table_strategy(5), mode in mode_strategy()) {
        let n = table.n();
        let (lz, want) = enumerate_marginals(&ArcWeights::from_table(&table), mode).unwrap();
        prop_assert!((log_partition_with(&table, mode).unwrap() - lz).abs() < 1e-9);
        let got = arc_marginals_with(&table, mode).unwrap();
        for m in 1..=n {
            let mut col = 0.0;
            for h in (0..=n).filter(|&h| h != m) {
                prop_assert!((got.get(h, m) - want.get(h, m)).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&got.get(h, m)));
                col += got.get(h, m);
            }
            prop_assert!((col - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_is_positive_semidefinite(
        (q, phi) in (2usize..7, 1usize..5).prop_flat_map(|(n, d)| (prop::collection::vec(0.01f64..1.0, n), unit_rows(n, d))),
        x in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let n = q.len();
        let k = SelectionKernel::new(q, phi, vec![1; n]).unwrap();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                prop_assert!((k.kernel_entry(i, j).unwrap() - k.kernel_entry(j, i).unwrap()).abs() < 1e-15);
                quad += x[i] * k.kernel_entry(i, j).unwrap() * x[j];
            }
        }
        prop_assert!(quad >= -1e-12);
    }

    #[test]
    fn greedy_respects_the_budget(
        (q, phi, sizes) in (1usize..25).prop_flat_map(|n| (
            prop::collection::vec(0.01f64..1.0, n),
            unit_rows(n, 6),
            prop::collection::vec(1usize..8, n),
        )),
        budget in 0usize..60,
    ) {
        let k = SelectionKernel::new(q, phi, sizes.clone()).unwrap();
        let sel = greedy_map(&k, budget);
        let items = sel.items();
        let mut seen = items.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), items.len());
        // Items are added while the running total is below the budget.
        let before_last: usize = items.iter().take(items.len().saturating_sub(1)).map(|&i| sizes[i]).sum();
        prop_assert!(items.is_empty() || before_last < budget);
        prop_assert!(items.len() == sizes.len() || sel.total_size() >= budget);
        prop_assert_eq!(sel.total_size(), items.iter().map(|&i| sizes[i]).sum::<usize>());
    }

    #[test]
    fn greedy_never_beats_brute_force(
        (q, phi) in (1usize..9).prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n), unit_rows(n, 9))),
        budget in 1usize..6,
    ) {
        let n = q.len();
        let k = SelectionKernel::new(q, phi, vec![1; n]).unwrap();
        let greedy = greedy_map(&k, budget).items();
        let best = brute_force_map(&k, budget).unwrap();
        prop_assert_eq!(best.len(), greedy.len());
        prop_assert!(k.subset_log_det(&greedy).unwrap() <= k.subset_log_det(&best).unwrap() + 1e-9);
    }

    #[test]
    fn duplicates_wait_for_saturation(
        (base, copies) in (1usize..6).prop_flat_map(|g| (unit_rows(g, 8), prop::collection::vec(1usize..4, g))),
        q_seed in 0u64..1000,
    ) {
        let mut phi = Vec::new();
        let mut group = Vec::new();
        for (g, (v, &c)) in base.iter().zip(&copies).enumerate() {
            for _ in 0..c {
                phi.push(v.clone());
                group.push(g);
            }
        }
        let q: Vec<f64> = (0..phi.len()).map(|i| 0.1 + ((q_seed as usize * 31 + i * 17) % 89) as f64 / 100.0).collect();
        let n = phi.len();
        let sel = greedy_map(&SelectionKernel::new(q, phi, vec![1; n]).unwrap(), n);
        let first_fallback = sel.steps.iter().position(|s| s.fallback).unwrap_or(n);
        let fresh: Vec<usize> = sel.steps[..first_fallback].iter().map(|s| group[s.item]).collect();
        let mut uniq = fresh.clone();
        uniq.sort_unstable();
        uniq.dedup();
        prop_assert_eq!(uniq.len(), fresh.len());
        prop_assert_eq!(fresh.len(), base.len());
    }

    #[test]
    fn ibad_dominates_ibmd(batch in (2usize..10, 1usize..6).prop_flat_map(|(n, d)| unit_rows(n, d))) {
        let refs: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
        let (a, m) = ibad_ibmd(&refs).unwrap();
        prop_assert!(a >= m - 1e-15);
        prop_assert!((-1e-12..=2.0 + 1e-12).contains(&a));
    }

    #[test]
    fn subgraph_features_are_unit_and_cover_every_token(trees in prop::collection::vec(random_tree(), 1..6)) {
        let vocab = fit_subgraph_vocab(&trees).unwrap();
        for t in &trees {
            prop_assert_eq!(subgraph_keys(t).len(), t.len());
            let f = subgraph_counts("s", t, &vocab).unwrap();
            prop_assert!((f.vector.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
            let toks = token_subgraph_features("s", t, &vocab).unwrap();
            prop_assert_eq!(toks.len(), t.len());
            for tok in toks {
                prop_assert!((tok.vector.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn doubling_a_tree_keeps_its_direction(tree in random_tree()) {
        // Two disjoint copies of the same tree under one root double every
        // key count; the normalised tf-idf vector must not move.
        let n = tree.len();
        let heads: Vec<usize> = tree.heads.iter().copied().chain(tree.heads.iter().map(|&h| if h == 0 { 0 } else { h + n })).collect();
        let rels: Vec<String> = tree.rels.iter().chain(&tree.rels).cloned().collect();
        let doubled = ParseTree::new(heads, rels).unwrap();
        let vocab = fit_subgraph_vocab(&[tree.clone(), doubled.clone()]).unwrap();
        let a = subgraph_counts("a", &tree, &vocab).unwrap().vector;
        let b = subgraph_counts("b", &doubled, &vocab).unwrap().vector;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
