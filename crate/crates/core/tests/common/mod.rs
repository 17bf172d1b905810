#![allow(dead_code)]

use std::collections::BTreeSet;

use learning_diagrams::graph::{GraphSpec, LearningGraph, VertexId};
use learning_diagrams::Diagram;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random DAG with up to `max_v` vertices and `max_e` edges. Vertex ids
/// are shuffled against the topological order, parallel edges allowed.
pub fn random_dag(seed: u64, max_v: usize, max_e: usize) -> LearningGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_v);
    let m = if n < 2 { 0 } else { rng.gen_range(0..=max_e) };
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(&mut rng);
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut spec = GraphSpec::new().vertices(&refs);
    for e in 0..m {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (s, t) = if rank[a] < rank[b] { (a, b) } else { (b, a) };
        spec = spec.edge(&format!("e{e}"), &labels[s], &labels[t]);
    }
    spec.build().expect("acyclic by construction")
}

/// Every nonempty path by depth-first search from each vertex.
pub fn dfs_paths(g: &LearningGraph) -> BTreeSet<(usize, usize, Vec<usize>)> {
    fn go(g: &LearningGraph, src: usize, v: VertexId, prefix: &mut Vec<usize>, out: &mut BTreeSet<(usize, usize, Vec<usize>)>) {
        for e in g.out_edges(v) {
            prefix.push(e.0);
            let t = g.tgt(e);
            out.insert((src, t.0, prefix.clone()));
            go(g, src, t, prefix, out);
            prefix.pop();
        }
    }
    let mut out = BTreeSet::new();
    for v in g.vertex_ids() {
        go(g, v.0, v, &mut Vec::new(), &mut out);
    }
    out
}

/// Least squares fit of the regression demo's data: weights, bias and the
/// residual sum of squares at the optimum.
pub fn normal_equations(d: &Diagram) -> (Vec<f64>, f64, f64) {
    let l = d.graph().vertex_by_label("l").unwrap();
    let ds = d.space(l).dataset.as_ref().unwrap();
    let col = |name: &str| ds.columns.iter().find(|c| c.name == name).unwrap();
    let (x, y) = (col("x"), col("y"));
    let n = ds.len();
    let a = DMatrix::from_fn(n, 3, |i, j| if j < 2 { x.data.data()[2 * i + j] } else { 1.0 });
    let b = DVector::from_column_slice(y.data.data());
    let ata = a.transpose() * &a;
    let theta = ata.lu().solve(&(a.transpose() * &b)).expect("full rank");
    let resid = &a * &theta - b;
    (vec![theta[0], theta[1]], theta[2], resid.dot(&resid))
}
