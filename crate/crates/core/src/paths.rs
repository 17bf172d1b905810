//! Path enumeration by set-valued adjacency-matrix powers, the path preorder
//! lifted from the edge preorder, and extraction of admissible parallel pairs.
//!
//! In the path semiring a cell holds a set of edge sequences; multiplication
//! concatenates and addition is set union. On a DAG the adjacency matrix is
//! nilpotent, so `A + A^2 + ... + A^(V-1)` holds every nonempty path.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::graph::{EdgeId, LearningGraph, Path, VertexId};

/// `V x V` matrix whose cells are sorted sets of edge sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathMatrix {
    n: usize,
    cells: Vec<BTreeSet<Vec<EdgeId>>>,
}

impl PathMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            cells: vec![BTreeSet::new(); n * n],
        }
    }

    /// Empty paths on the diagonal: the multiplicative identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::empty(n);
        for i in 0..n {
            m.cells[i * n + i].insert(Vec::new());
        }
        m
    }

    /// One length-1 path per edge.
    pub fn adjacency(graph: &LearningGraph) -> Self {
        let n = graph.vertex_count();
        let mut m = Self::empty(n);
        for e in graph.edge_ids() {
            let (s, t) = (graph.src(e), graph.tgt(e));
            m.cells[s.0 * n + t.0].insert(vec![e]);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn cell(&self, u: VertexId, v: VertexId) -> &BTreeSet<Vec<EdgeId>> {
        &self.cells[u.0 * self.n + v.0]
    }

    pub fn cell_paths(&self, u: VertexId, v: VertexId) -> impl Iterator<Item = Path> + '_ {
        self.cell(u, v).iter().map(move |edges| Path {
            src: u,
            tgt: v,
            edges: edges.clone(),
        })
    }

    /// Every path in the matrix, ordered by `(src, tgt, edges)`.
    pub fn iter_paths(&self) -> impl Iterator<Item = Path> + '_ {
        (0..self.n).flat_map(move |u| {
            (0..self.n).flat_map(move |v| self.cell_paths(VertexId(u), VertexId(v)))
        })
    }

    pub fn path_count(&self) -> usize {
        self.cells.iter().map(BTreeSet::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(BTreeSet::is_empty)
    }

    /// Set union, cell by cell.
    pub fn union_with(&mut self, other: &PathMatrix) {
        assert_eq!(self.n, other.n, "path matrices over different vertex sets");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.extend(b.iter().cloned());
        }
    }

    /// Semiring product: cell `(u, w)` is the union over `v` of all
    /// concatenations `p.q` with `p` in `A(u, v)` and `q` in `B(v, w)`.
    pub fn multiply(&self, other: &PathMatrix) -> PathMatrix {
        assert_eq!(self.n, other.n, "path matrices over different vertex sets");
        let n = self.n;
        let rows: Vec<Vec<BTreeSet<Vec<EdgeId>>>> = (0..n)
            .into_par_iter()
            .map(|u| {
                (0..n)
                    .map(|w| {
                        let mut cell = BTreeSet::new();
                        for v in 0..n {
                            let left = &self.cells[u * n + v];
                            let right = &other.cells[v * n + w];
                            if left.is_empty() || right.is_empty() {
                                continue;
                            }
                            for p in left {
                                for q in right {
                                    let mut pq = Vec::with_capacity(p.len() + q.len());
                                    pq.extend_from_slice(p);
                                    pq.extend_from_slice(q);
                                    cell.insert(pq);
                                }
                            }
                        }
                        cell
                    })
                    .collect()
            })
            .collect();
        PathMatrix {
            n,
            cells: rows.into_iter().flatten().collect(),
        }
    }
}

pub fn adjacency(graph: &LearningGraph) -> PathMatrix {
    PathMatrix::adjacency(graph)
}

pub fn semiring_multiply(a: &PathMatrix, b: &PathMatrix) -> PathMatrix {
    a.multiply(b)
}

/// `[A^1, A^2, ...]` up to `max_len` (or until the power vanishes).
pub fn powers(graph: &LearningGraph, max_len: Option<usize>) -> Vec<PathMatrix> {
    let a = PathMatrix::adjacency(graph);
    let limit = max_len.unwrap_or(graph.vertex_count().saturating_sub(1));
    let mut out = Vec::new();
    if limit == 0 || a.is_zero() {
        return out;
    }
    let mut current = a.clone();
    out.push(current.clone());
    for _ in 1..limit {
        current = current.multiply(&a);
        if current.is_zero() {
            break;
        }
        out.push(current.clone());
    }
    out
}

/// Every nonempty path: the union of `A^1 .. A^(V-1)`.
pub fn all_paths(graph: &LearningGraph) -> PathMatrix {
    all_paths_up_to(graph, None)
}

/// Paths of length at most `max_len` (all paths when `None`).
pub fn all_paths_up_to(graph: &LearningGraph, max_len: Option<usize>) -> PathMatrix {
    let mut acc = PathMatrix::empty(graph.vertex_count());
    for p in powers(graph, max_len) {
        acc.union_with(&p);
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathRelation {
    LessEq,
    GreaterEq,
    Equivalent,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("paths are not parallel")]
    NotParallel,
    #[error("not a path of this graph")]
    InvalidPath,
}

/// Splits two parallel paths at the vertices they share. Returns the pairs
/// of sub-paths that differ; equal stretches are dropped.
fn divergent_segments<'a>(
    graph: &LearningGraph,
    p: &'a [EdgeId],
    q: &'a [EdgeId],
    src: VertexId,
) -> Vec<(&'a [EdgeId], &'a [EdgeId])> {
    let verts = |edges: &[EdgeId]| {
        let mut v = vec![src];
        v.extend(edges.iter().map(|&e| graph.tgt(e)));
        v
    };
    let (vp, vq) = (verts(p), verts(q));
    let shared: BTreeSet<VertexId> = vp.iter().filter(|v| vq.contains(v)).copied().collect();
    let cuts = |vs: &[VertexId]| -> Vec<usize> {
        vs.iter()
            .enumerate()
            .filter(|(_, v)| shared.contains(v))
            .map(|(i, _)| i)
            .collect()
    };
    let (cp, cq) = (cuts(&vp), cuts(&vq));
    debug_assert_eq!(cp.len(), cq.len());
    cp.windows(2)
        .zip(cq.windows(2))
        .map(|(a, b)| (&p[a[0]..a[1]], &q[b[0]..b[1]]))
        .filter(|(a, b)| a != b)
        .collect()
}

/// Generating relation of the lifted preorder on parallel paths: `p <= q`
/// when, at every stretch where the two paths diverge, some edge on the `p`
/// side is below some edge on the `q` side. Whiskering invariance holds by
/// construction because shared prefixes and suffixes are cut away.
fn generated_leq(graph: &LearningGraph, src: VertexId, p: &[EdgeId], q: &[EdgeId]) -> bool {
    if p == q {
        return true;
    }
    divergent_segments(graph, p, q, src)
        .into_iter()
        .all(|(a, b)| a.iter().any(|&e| b.iter().any(|&f| graph.leq(e, f))))
}

/// The lifted preorder restricted to one cell of the path matrix.
#[derive(Clone, Debug)]
pub struct CellPreorder {
    src: VertexId,
    tgt: VertexId,
    paths: Vec<Vec<EdgeId>>,
    leq: Vec<bool>,
}

impl CellPreorder {
    /// Transitive closure of the generating relation over the (finite) set
    /// of paths from `src` to `tgt`.
    pub fn new(graph: &LearningGraph, paths: &PathMatrix, src: VertexId, tgt: VertexId) -> Self {
        let mut list: Vec<Vec<EdgeId>> = paths.cell(src, tgt).iter().cloned().collect();
        if src == tgt {
            list.insert(0, Vec::new());
        }
        let n = list.len();
        let mut leq = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                leq[i * n + j] = generated_leq(graph, src, &list[i], &list[j]);
            }
        }
        for k in 0..n {
            for i in 0..n {
                if leq[i * n + k] {
                    for j in 0..n {
                        if leq[k * n + j] {
                            leq[i * n + j] = true;
                        }
                    }
                }
            }
        }
        Self {
            src,
            tgt,
            paths: list,
            leq,
        }
    }

    pub fn paths(&self) -> &[Vec<EdgeId>] {
        &self.paths
    }

    pub fn leq_index(&self, i: usize, j: usize) -> bool {
        self.leq[i * self.paths.len() + j]
    }

    fn index_of(&self, p: &Path) -> Result<usize, PathError> {
        if p.src != self.src || p.tgt != self.tgt {
            return Err(PathError::NotParallel);
        }
        self.paths
            .iter()
            .position(|e| *e == p.edges)
            .ok_or(PathError::InvalidPath)
    }

    pub fn relation(&self, p: &Path, q: &Path) -> Result<PathRelation, PathError> {
        let (i, j) = (self.index_of(p)?, self.index_of(q)?);
        Ok(relation_from(self.leq_index(i, j), self.leq_index(j, i)))
    }
}

fn relation_from(le: bool, ge: bool) -> PathRelation {
    match (le, ge) {
        (true, true) => PathRelation::Equivalent,
        (true, false) => PathRelation::LessEq,
        (false, true) => PathRelation::GreaterEq,
        (false, false) => PathRelation::Incomparable,
    }
}

/// Relation between two parallel paths in the preorder lifted from the
/// graph's stored edge order (no defaulting is applied here).
pub fn lift_order(graph: &LearningGraph, p: &Path, q: &Path) -> Result<PathRelation, PathError> {
    if p.src != q.src || p.tgt != q.tgt {
        return Err(PathError::NotParallel);
    }
    for path in [p, q] {
        if !path.is_empty() && Path::from_edges(graph, path.edges.clone()).as_ref() != Some(path) {
            return Err(PathError::InvalidPath);
        }
    }
    let all = all_paths(graph);
    CellPreorder::new(graph, &all, p.src, p.tgt).relation(p, q)
}

/// Two distinct nonempty parallel paths starting at an indexing vertex;
/// `first` is the lesser path and supplies the metric's first argument.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParallelPair {
    pub src: VertexId,
    pub tgt: VertexId,
    pub first: Path,
    pub second: Path,
}

impl ParallelPair {
    pub fn describe(&self, graph: &LearningGraph) -> String {
        format!(
            "{} -> {} : {} <= {}",
            graph.vertex_label(self.src),
            graph.vertex_label(self.tgt),
            graph.path_label(&self.first),
            graph.path_label(&self.second)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairWarning {
    /// Two parallel paths that the preorder does not relate; no loss term.
    Incomparable { a: Path, b: Path },
}

impl PairWarning {
    pub fn describe(&self, graph: &LearningGraph) -> String {
        match self {
            PairWarning::Incomparable { a, b } => format!(
                "incomparable parallel paths {} -> {} : {} vs {} (skipped)",
                graph.vertex_label(a.src),
                graph.vertex_label(a.tgt),
                graph.path_label(a),
                graph.path_label(b)
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairSet {
    pub pairs: Vec<ParallelPair>,
    pub warnings: Vec<PairWarning>,
}

/// Admissible ordered parallel pairs.
///
/// Applies the default edge order, then for every unordered pair of distinct
/// nonempty parallel paths from an indexing vertex to a vertex accepted by
/// `metric_finite`: a strict relation emits that ordered pair, equivalence
/// emits one pair with the lexicographically smaller edge sequence first, and
/// incomparability emits a warning instead.
pub fn parallel_pairs(graph: &LearningGraph, metric_finite: impl Fn(VertexId) -> bool) -> PairSet {
    let graph = graph.default_order();
    let all = all_paths(&graph);
    let mut out = PairSet::default();
    for src in graph.vertex_ids().filter(|&v| graph.is_indexing(v)) {
        for tgt in graph.vertex_ids() {
            if src == tgt || !metric_finite(tgt) || all.cell(src, tgt).len() < 2 {
                continue;
            }
            let cell = CellPreorder::new(&graph, &all, src, tgt);
            let ps = cell.paths();
            let mk = |edges: &Vec<EdgeId>| Path {
                src,
                tgt,
                edges: edges.clone(),
            };
            for i in 0..ps.len() {
                for j in i + 1..ps.len() {
                    let (first, second) =
                        match relation_from(cell.leq_index(i, j), cell.leq_index(j, i)) {
                            PathRelation::Equivalent | PathRelation::LessEq => (i, j),
                            PathRelation::GreaterEq => (j, i),
                            PathRelation::Incomparable => {
                                out.warnings.push(PairWarning::Incomparable {
                                    a: mk(&ps[i]),
                                    b: mk(&ps[j]),
                                });
                                continue;
                            }
                        };
                    out.pairs.push(ParallelPair {
                        src,
                        tgt,
                        first: mk(&ps[first]),
                        second: mk(&ps[second]),
                    });
                }
            }
        }
    }
    out.pairs.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;

    fn prediction() -> LearningGraph {
        GraphSpec::new()
            .vertices(&["l", "P", "R"])
            .edge("Xtheta", "l", "P")
            .edge("f", "P", "R")
            .edge("Y", "l", "R")
            .indexing(&["l"])
            .build()
            .unwrap()
    }

    fn kd() -> LearningGraph {
        GraphSpec::new()
            .vertices(&["N", "X", "T", "S", "G", "Y"])
            .edge("pi1", "N", "X")
            .edge("pi2", "N", "Y")
            .edge("t", "X", "T")
            .edge("s", "X", "S")
            .edge("sigma_t", "T", "G")
            .edge("sigma_s", "S", "G")
            .edge("sigma_y", "S", "Y")
            .order("t", "s")
            .order("pi2", "pi1")
            .indexing(&["N"])
            .build()
            .unwrap()
    }

    fn ids(g: &LearningGraph, labels: &[&str]) -> Vec<EdgeId> {
        labels.iter().map(|l| g.edge_by_label(l).unwrap()).collect()
    }

    #[test]
    fn adjacency_of_prediction() {
        let g = prediction();
        let a = adjacency(&g);
        let (l, p, r) = (VertexId(0), VertexId(1), VertexId(2));
        assert_eq!(a.cell(l, p).len(), 1);
        assert_eq!(a.cell(p, r).len(), 1);
        assert_eq!(a.cell(l, r).iter().next().unwrap(), &ids(&g, &["Y"]));
        assert_eq!(a.path_count(), 3);
    }

    #[test]
    fn parallel_edges_fill_one_cell() {
        let g = GraphSpec::new()
            .vertices(&["u", "v"])
            .edge("a", "u", "v")
            .edge("b", "u", "v")
            .build()
            .unwrap();
        assert_eq!(adjacency(&g).cell(VertexId(0), VertexId(1)).len(), 2);
    }

    #[test]
    fn edgeless_graph_has_empty_cells() {
        let g = GraphSpec::new().vertices(&["a", "b"]).build().unwrap();
        assert!(adjacency(&g).is_zero());
        assert!(all_paths(&g).is_zero());
    }

    #[test]
    fn square_of_prediction_adjacency() {
        let g = prediction();
        let a = adjacency(&g);
        let a2 = semiring_multiply(&a, &a);
        assert_eq!(a2.path_count(), 1);
        assert_eq!(
            a2.cell(VertexId(0), VertexId(2)).iter().next().unwrap(),
            &ids(&g, &["Xtheta", "f"])
        );
    }

    #[test]
    fn identity_is_neutral() {
        let g = kd();
        let a = adjacency(&g);
        let id = PathMatrix::identity(g.vertex_count());
        assert_eq!(semiring_multiply(&a, &id), a);
        assert_eq!(semiring_multiply(&id, &a), a);
    }

    #[test]
    fn all_paths_prediction_has_two_from_l_to_r() {
        let g = prediction();
        let all = all_paths(&g);
        let cell = all.cell(VertexId(0), VertexId(2));
        assert_eq!(cell.len(), 2);
        assert!(cell.contains(&ids(&g, &["Y"])));
        assert!(cell.contains(&ids(&g, &["Xtheta", "f"])));
    }

    #[test]
    fn chain_has_single_path() {
        let g = GraphSpec::new()
            .vertices(&["a", "b", "c"])
            .edge("f", "a", "b")
            .edge("g", "b", "c")
            .build()
            .unwrap();
        assert_eq!(all_paths(&g).cell(VertexId(0), VertexId(2)).len(), 1);
    }

    #[test]
    fn lift_order_reflexive_and_declared() {
        let g = kd();
        let student = Path::from_edges(&g, ids(&g, &["pi1", "s", "sigma_s"])).unwrap();
        let teacher = Path::from_edges(&g, ids(&g, &["pi1", "t", "sigma_t"])).unwrap();
        assert_eq!(lift_order(&g, &student, &student), Ok(PathRelation::Equivalent));
        assert_eq!(lift_order(&g, &teacher, &student), Ok(PathRelation::LessEq));
        assert_eq!(lift_order(&g, &student, &teacher), Ok(PathRelation::GreaterEq));
        let other = Path::from_edges(&g, ids(&g, &["pi1", "s"])).unwrap();
        assert_eq!(lift_order(&g, &student, &other), Err(PathError::NotParallel));
    }

    #[test]
    fn lift_order_incomparable_without_covering_declaration() {
        let g = GraphSpec::new()
            .vertices(&["n", "a", "b", "v", "w"])
            .edge("p1", "n", "a")
            .edge("p2", "a", "v")
            .edge("q1", "n", "b")
            .edge("q2", "b", "v")
            .edge("x", "v", "w")
            .edge("y", "v", "w")
            .order("x", "y")
            .build()
            .unwrap();
        let p = Path::from_edges(&g, ids(&g, &["p1", "p2"])).unwrap();
        let q = Path::from_edges(&g, ids(&g, &["q1", "q2"])).unwrap();
        assert_eq!(lift_order(&g, &p, &q), Ok(PathRelation::Incomparable));
    }

    #[test]
    fn kd_has_two_pairs() {
        let g = kd();
        let set = parallel_pairs(&g, |_| true);
        assert_eq!(set.pairs.len(), 2, "{set:?}");
        assert!(set.warnings.is_empty());
        let descr: Vec<_> = set.pairs.iter().map(|p| p.describe(&g)).collect();
        assert!(descr.contains(&"N -> G : pi1.t.sigma_t <= pi1.s.sigma_s".to_string()));
        assert!(descr.contains(&"N -> Y : pi2 <= pi1.s.sigma_y".to_string()));
    }

    #[test]
    fn prediction_has_one_pair() {
        let g = prediction();
        let set = parallel_pairs(&g, |_| true);
        assert_eq!(set.pairs.len(), 1);
    }

    #[test]
    fn infinite_target_gives_no_pairs() {
        let g = GraphSpec::new()
            .vertices(&["n", "a", "b", "v"])
            .edge("p1", "n", "a")
            .edge("p2", "a", "v")
            .edge("q1", "n", "b")
            .edge("q2", "b", "v")
            .indexing(&["n"])
            .build()
            .unwrap();
        let v = g.vertex_by_label("v").unwrap();
        assert!(parallel_pairs(&g, |t| t != v).pairs.is_empty());
        assert_eq!(parallel_pairs(&g, |_| true).pairs.len(), 1);
    }

    #[test]
    fn non_indexing_sources_ignored() {
        let g = GraphSpec::new()
            .vertices(&["n", "a", "b", "v"])
            .edge("p1", "n", "a")
            .edge("p2", "a", "v")
            .edge("q1", "n", "b")
            .edge("q2", "b", "v")
            .build()
            .unwrap();
        assert!(parallel_pairs(&g, |_| true).pairs.is_empty());
    }
}
