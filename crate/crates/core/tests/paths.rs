mod common;

use std::collections::BTreeSet;

use learning_diagrams::graph::{EdgeId, GraphSpec, LearningGraph, Path};
use learning_diagrams::paths::{all_paths, all_paths_up_to, parallel_pairs, CellPreorder};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `random_dag` plus a few random declared order relations between edges.
fn ordered_dag(seed: u64, max_v: usize, max_e: usize, relations: usize) -> LearningGraph {
    let g = common::random_dag(seed, max_v, max_e);
    let mut spec = g.to_spec();
    let m = g.edge_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    if m > 0 {
        for _ in 0..relations {
            let a = rng.gen_range(0..m);
            let b = rng.gen_range(0..m);
            spec = spec.order(&format!("e{a}"), &format!("e{b}"));
        }
    }
    spec.build().unwrap()
}

/// Least relation on paths containing the single-edge order, closed under
/// whiskering and transitivity, by brute-force fixed point.
fn whisker_closure(g: &LearningGraph, paths: &[(usize, usize, Vec<EdgeId>)]) -> BTreeSet<(usize, usize)> {
    let idx = |edges: &[EdgeId]| paths.iter().position(|p| p.2 == edges);
    let mut rel: BTreeSet<(usize, usize)> = (0..paths.len()).map(|i| (i, i)).collect();
    for (i, p) in paths.iter().enumerate() {
        for (j, q) in paths.iter().enumerate() {
            if p.0 == q.0 && p.1 == q.1 && p.2.len() == 1 && q.2.len() == 1 && g.leq(p.2[0], q.2[0]) {
                rel.insert((i, j));
            }
        }
    }
    loop {
        let mut next = rel.clone();
        for &(i, j) in &rel {
            let (p, q) = (&paths[i], &paths[j]);
            for e in g.edge_ids() {
                if g.src(e).0 == p.1 {
                    let (mut a, mut b) = (p.2.clone(), q.2.clone());
                    a.push(e);
                    b.push(e);
                    next.insert((idx(&a).unwrap(), idx(&b).unwrap()));
                }
                if g.tgt(e).0 == p.0 {
                    let a: Vec<_> = std::iter::once(e).chain(p.2.iter().copied()).collect();
                    let b: Vec<_> = std::iter::once(e).chain(q.2.iter().copied()).collect();
                    next.insert((idx(&a).unwrap(), idx(&b).unwrap()));
                }
            }
            for &(k, l) in &rel {
                if k == j {
                    next.insert((i, l));
                }
            }
        }
        if next == rel {
            return rel;
        }
        rel = next;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semiring_matches_dfs(seed in any::<u64>()) {
        let g = common::random_dag(seed, 9, 16);
        let got: BTreeSet<_> = all_paths(&g)
            .iter_paths()
            .map(|p| (p.src.0, p.tgt.0, p.edges.iter().map(|e| e.0).collect::<Vec<_>>()))
            .collect();
        prop_assert_eq!(got, common::dfs_paths(&g));
    }

    #[test]
    fn max_len_truncates(seed in any::<u64>(), k in 0usize..4) {
        let g = common::random_dag(seed, 7, 12);
        let got: BTreeSet<_> = all_paths_up_to(&g, Some(k))
            .iter_paths()
            .map(|p| (p.src.0, p.tgt.0, p.edges.iter().map(|e| e.0).collect::<Vec<_>>()))
            .collect();
        let want: BTreeSet<_> = common::dfs_paths(&g).into_iter().filter(|p| p.2.len() <= k).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn lifted_order_contains_whisker_closure(seed in any::<u64>()) {
        let g = ordered_dag(seed, 5, 7, 4);
        let all = all_paths(&g);
        let paths: Vec<(usize, usize, Vec<EdgeId>)> = all
            .iter_paths()
            .map(|p| (p.src.0, p.tgt.0, p.edges))
            .collect();
        let closure = whisker_closure(&g, &paths);
        for (i, j) in closure {
            let (p, q) = (&paths[i], &paths[j]);
            let cell = CellPreorder::new(&g, &all, p.2.first().map(|&e| g.src(e)).unwrap(), g.tgt(*p.2.last().unwrap()));
            let pi = cell.paths().iter().position(|x| *x == p.2).unwrap();
            let qi = cell.paths().iter().position(|x| *x == q.2).unwrap();
            prop_assert!(cell.leq_index(pi, qi), "{:?} <= {:?} missing", p.2, q.2);
        }
    }

    #[test]
    fn lifted_order_is_a_whiskered_preorder(seed in any::<u64>()) {
        let g = ordered_dag(seed, 5, 7, 4);
        let all = all_paths(&g);
        for u in g.vertex_ids() {
            for v in g.vertex_ids() {
                let cell = CellPreorder::new(&g, &all, u, v);
                let n = cell.paths().len();
                for i in 0..n {
                    prop_assert!(cell.leq_index(i, i));
                    for j in 0..n {
                        for k in 0..n {
                            if cell.leq_index(i, j) && cell.leq_index(j, k) {
                                prop_assert!(cell.leq_index(i, k));
                            }
                        }
                        // post-whiskering by any edge out of v
                        if u != v && cell.leq_index(i, j) {
                            for e in g.out_edges(v) {
                                let w = g.tgt(e);
                                let next = CellPreorder::new(&g, &all, u, w);
                                let ext = |p: &Vec<EdgeId>| {
                                    let mut p = p.clone();
                                    p.push(e);
                                    next.paths().iter().position(|x| *x == p).unwrap()
                                };
                                prop_assert!(next.leq_index(ext(&cell.paths()[i]), ext(&cell.paths()[j])));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn pairs_are_admissible_and_canonical(seed in any::<u64>()) {
        let g = ordered_dag(seed, 6, 10, 3);
        let set = parallel_pairs(&g, |_| true);
        let sorted = set.pairs.windows(2).all(|w| w[0] < w[1]);
        prop_assert!(sorted);
        let mut seen = BTreeSet::new();
        for p in &set.pairs {
            prop_assert!(g.is_indexing(p.src));
            prop_assert_eq!((p.first.src, p.first.tgt), (p.src, p.tgt));
            prop_assert_eq!((p.second.src, p.second.tgt), (p.src, p.tgt));
            prop_assert!(p.first != p.second && !p.first.is_empty() && !p.second.is_empty());
            let key = if p.first.edges < p.second.edges {
                (p.first.edges.clone(), p.second.edges.clone())
            } else {
                (p.second.edges.clone(), p.first.edges.clone())
            };
            prop_assert!(seen.insert(key), "unordered pair emitted twice");
        }
    }
}

#[test]
fn prediction_triangle_has_two_paths_and_one_pair() {
    let g = GraphSpec::new()
        .vertices(&["l", "P", "R"])
        .edge("Xtheta", "l", "P")
        .edge("f", "P", "R")
        .edge("Y", "l", "R")
        .order("Y", "Xtheta")
        .indexing(&["l"])
        .build()
        .unwrap();
    let (l, r) = (g.vertex_by_label("l").unwrap(), g.vertex_by_label("R").unwrap());
    assert_eq!(all_paths(&g).cell(l, r).len(), 2);
    let set = parallel_pairs(&g, |v| v == r);
    assert_eq!(set.pairs.len(), 1);
    let y = Path::single(&g, g.edge_by_label("Y").unwrap());
    assert_eq!(set.pairs[0].first, y);
}
