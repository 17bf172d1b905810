//! Learning graphs: directed acyclic multigraphs with an edge preorder and
//! an indexing / non-indexing label on every vertex.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Indexing,
    NonIndexing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub label: String,
    pub src: VertexId,
    pub tgt: VertexId,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("empty label")]
    EmptyLabel,
    #[error("duplicate {kind} label `{label}`")]
    DuplicateLabel { kind: &'static str, label: String },
    #[error("edge `{edge}` references unknown vertex `{endpoint}`")]
    UnknownEndpoint { edge: String, endpoint: String },
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("cycle detected through vertices {0:?}")]
    CycleDetected(Vec<String>),
    #[error("polarity violation: edges {0:?} go from a non-indexing to an indexing vertex")]
    PolarityViolation(Vec<String>),
}

/// Label-level description of a graph; also its interchange form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    /// Declared pairs `[a, b]` meaning `a <= b`.
    #[serde(default)]
    pub order: Vec<(String, String)>,
    /// Indexing vertices. `None` leaves the graph without polarity labels,
    /// which behaves as all non-indexing but does not constrain homomorphisms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indexing: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub label: String,
    pub src: String,
    pub tgt: String,
}

impl GraphSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn vertex(mut self, label: &str) -> Self {
        self.vertices.push(label.to_string());
        self
    }

    pub fn vertices(mut self, labels: &[&str]) -> Self {
        self.vertices.extend(labels.iter().map(|s| s.to_string()));
        self
    }

    pub fn edge(mut self, label: &str, src: &str, tgt: &str) -> Self {
        self.edges.push(EdgeSpec {
            label: label.to_string(),
            src: src.to_string(),
            tgt: tgt.to_string(),
        });
        self
    }

    pub fn order(mut self, lesser: &str, greater: &str) -> Self {
        self.order.push((lesser.to_string(), greater.to_string()));
        self
    }

    pub fn indexing(mut self, labels: &[&str]) -> Self {
        self.indexing
            .get_or_insert_with(Vec::new)
            .extend(labels.iter().map(|s| s.to_string()));
        self
    }

    pub fn build(&self) -> Result<LearningGraph, GraphError> {
        LearningGraph::build(self)
    }
}

/// A validated learning graph. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LearningGraph {
    name: Option<String>,
    vertices: Vec<String>,
    edges: Vec<Edge>,
    declared: BTreeSet<(EdgeId, EdgeId)>,
    /// Reflexive-transitive closure, row-major `edges x edges`.
    leq: Vec<bool>,
    polarity: Vec<Polarity>,
    polarity_labeled: bool,
    topo: Vec<VertexId>,
}

/// Edges violating the indexing-before-non-indexing rule.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PolarityReport {
    pub violations: Vec<EdgeId>,
}

impl PolarityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn closure(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<bool> {
    let mut r = vec![false; n * n];
    for i in 0..n {
        r[i * n + i] = true;
    }
    for (a, b) in pairs {
        r[a * n + b] = true;
    }
    // Warshall
    for k in 0..n {
        for i in 0..n {
            if r[i * n + k] {
                for j in 0..n {
                    if r[k * n + j] {
                        r[i * n + j] = true;
                    }
                }
            }
        }
    }
    r
}

impl LearningGraph {
    /// Validates and builds a graph; the order is stored as the closure of
    /// the declared pairs.
    pub fn build(spec: &GraphSpec) -> Result<Self, GraphError> {
        let mut vindex: HashMap<&str, usize> = HashMap::new();
        for (i, v) in spec.vertices.iter().enumerate() {
            if v.is_empty() {
                return Err(GraphError::EmptyLabel);
            }
            if vindex.insert(v.as_str(), i).is_some() {
                return Err(GraphError::DuplicateLabel {
                    kind: "vertex",
                    label: v.clone(),
                });
            }
        }
        let mut eindex: HashMap<&str, usize> = HashMap::new();
        let mut edges = Vec::with_capacity(spec.edges.len());
        for (i, e) in spec.edges.iter().enumerate() {
            if e.label.is_empty() {
                return Err(GraphError::EmptyLabel);
            }
            if eindex.insert(e.label.as_str(), i).is_some() {
                return Err(GraphError::DuplicateLabel {
                    kind: "edge",
                    label: e.label.clone(),
                });
            }
            let lookup = |l: &str| {
                vindex
                    .get(l)
                    .copied()
                    .map(VertexId)
                    .ok_or_else(|| GraphError::UnknownEndpoint {
                        edge: e.label.clone(),
                        endpoint: l.to_string(),
                    })
            };
            edges.push(Edge {
                label: e.label.clone(),
                src: lookup(&e.src)?,
                tgt: lookup(&e.tgt)?,
            });
        }
        let mut declared = BTreeSet::new();
        for (a, b) in &spec.order {
            let ea = eindex
                .get(a.as_str())
                .ok_or_else(|| GraphError::UnknownEdge(a.clone()))?;
            let eb = eindex
                .get(b.as_str())
                .ok_or_else(|| GraphError::UnknownEdge(b.clone()))?;
            declared.insert((EdgeId(*ea), EdgeId(*eb)));
        }
        let mut polarity = vec![Polarity::NonIndexing; spec.vertices.len()];
        if let Some(ix) = &spec.indexing {
            for l in ix {
                let v = vindex
                    .get(l.as_str())
                    .ok_or_else(|| GraphError::UnknownVertex(l.clone()))?;
                polarity[*v] = Polarity::Indexing;
            }
        }
        let leq = closure(edges.len(), declared.iter().map(|(a, b)| (a.0, b.0)));
        let mut g = LearningGraph {
            name: spec.name.clone(),
            vertices: spec.vertices.clone(),
            edges,
            declared,
            leq,
            polarity,
            polarity_labeled: spec.indexing.is_some(),
            topo: Vec::new(),
        };
        g.topo = g.topological_order()?;
        let report = g.polarity_check();
        if !report.is_ok() {
            return Err(GraphError::PolarityViolation(
                report
                    .violations
                    .iter()
                    .map(|&e| g.edge_label(e).to_string())
                    .collect(),
            ));
        }
        Ok(g)
    }

    fn topological_order(&self) -> Result<Vec<VertexId>, GraphError> {
        let n = self.vertices.len();
        let mut indeg = vec![0usize; n];
        for e in &self.edges {
            indeg[e.tgt.0] += 1;
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(VertexId(v));
            for e in self.edges.iter().filter(|e| e.src.0 == v) {
                indeg[e.tgt.0] -= 1;
                if indeg[e.tgt.0] == 0 {
                    queue.push_back(e.tgt.0);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n)
                .filter(|&v| indeg[v] > 0)
                .map(|v| self.vertices[v].clone())
                .collect();
            return Err(GraphError::CycleDetected(stuck));
        }
        Ok(order)
    }

    /// Label-level description; `build(to_spec())` reproduces the graph.
    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            name: self.name.clone(),
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    label: e.label.clone(),
                    src: self.vertices[e.src.0].clone(),
                    tgt: self.vertices[e.tgt.0].clone(),
                })
                .collect(),
            order: self
                .declared
                .iter()
                .map(|(a, b)| (self.edge_label(*a).to_string(), self.edge_label(*b).to_string()))
                .collect(),
            indexing: self.polarity_labeled.then(|| {
                self.vertex_ids()
                    .filter(|&v| self.is_indexing(v))
                    .map(|v| self.vertex_label(v).to_string())
                    .collect()
            }),
        }
    }

    /// Applies the default edge order: with no declarations every pair of
    /// edges is equivalent; otherwise the declared closure is kept.
    pub fn default_order(&self) -> LearningGraph {
        let mut g = self.clone();
        if g.declared.is_empty() {
            g.leq = vec![true; g.edges.len() * g.edges.len()];
        }
        g
    }

    /// Lists every edge from a non-indexing to an indexing vertex.
    pub fn polarity_check(&self) -> PolarityReport {
        PolarityReport {
            violations: self
                .edge_ids()
                .filter(|&e| {
                    let ed = &self.edges[e.0];
                    self.polarity[ed.src.0] == Polarity::NonIndexing
                        && self.polarity[ed.tgt.0] == Polarity::Indexing
                })
                .collect(),
        }
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertices.len()).map(VertexId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn vertex_label(&self, v: VertexId) -> &str {
        &self.vertices[v.0]
    }

    pub fn edge_label(&self, e: EdgeId) -> &str {
        &self.edges[e.0].label
    }

    pub fn vertex_by_label(&self, label: &str) -> Option<VertexId> {
        self.vertices.iter().position(|v| v == label).map(VertexId)
    }

    pub fn edge_by_label(&self, label: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.label == label).map(EdgeId)
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn src(&self, e: EdgeId) -> VertexId {
        self.edges[e.0].src
    }

    pub fn tgt(&self, e: EdgeId) -> VertexId {
        self.edges[e.0].tgt
    }

    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = EdgeId> + '_ {
        self.edge_ids().filter(move |&e| self.edges[e.0].src == v)
    }

    pub fn polarity(&self, v: VertexId) -> Polarity {
        self.polarity[v.0]
    }

    pub fn is_indexing(&self, v: VertexId) -> bool {
        self.polarity[v.0] == Polarity::Indexing
    }

    /// Whether the graph carries explicit polarity labels.
    pub fn polarity_labeled(&self) -> bool {
        self.polarity_labeled
    }

    /// `a <= b` in the stored edge preorder.
    pub fn leq(&self, a: EdgeId, b: EdgeId) -> bool {
        self.leq[a.0 * self.edges.len() + b.0]
    }

    pub fn declared_order(&self) -> &BTreeSet<(EdgeId, EdgeId)> {
        &self.declared
    }

    pub fn topo_order(&self) -> &[VertexId] {
        &self.topo
    }

    /// Dot-joined edge labels of a path, e.g. `X.f`.
    pub fn path_label(&self, path: &Path) -> String {
        path.edges
            .iter()
            .map(|&e| self.edge_label(e))
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// A composable sequence of edges; empty paths are identities.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub src: VertexId,
    pub tgt: VertexId,
    pub edges: Vec<EdgeId>,
}

impl Path {
    pub fn identity(v: VertexId) -> Self {
        Path {
            src: v,
            tgt: v,
            edges: Vec::new(),
        }
    }

    pub fn single(graph: &LearningGraph, e: EdgeId) -> Self {
        Path {
            src: graph.src(e),
            tgt: graph.tgt(e),
            edges: vec![e],
        }
    }

    /// Checks composability of a nonempty edge sequence.
    pub fn from_edges(graph: &LearningGraph, edges: Vec<EdgeId>) -> Option<Self> {
        let first = *edges.first()?;
        let last = *edges.last()?;
        if edges.iter().any(|e| e.0 >= graph.edge_count()) {
            return None;
        }
        if edges.windows(2).any(|w| graph.tgt(w[0]) != graph.src(w[1])) {
            return None;
        }
        Some(Path {
            src: graph.src(first),
            tgt: graph.tgt(last),
            edges,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    /// `self` followed by `other`; `None` when the endpoints do not meet.
    pub fn then(&self, other: &Path) -> Option<Path> {
        if self.tgt != other.src {
            return None;
        }
        let mut edges = self.edges.clone();
        edges.extend_from_slice(&other.edges);
        Some(Path {
            src: self.src,
            tgt: other.tgt,
            edges,
        })
    }

    /// Vertices visited, in order, starting with `src`.
    pub fn vertices(&self, graph: &LearningGraph) -> Vec<VertexId> {
        let mut out = vec![self.src];
        out.extend(self.edges.iter().map(|&e| graph.tgt(e)));
        out
    }
}
