use std::collections::BTreeMap;

use crate::graph::{EdgeId, LearningGraph, VertexId};

/// A vertex and edge map between learning graphs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiagramHom {
    pub source: LearningGraph,
    pub target: LearningGraph,
    /// Indexed by source vertex id.
    pub vmap: Vec<VertexId>,
    /// Indexed by source edge id.
    pub emap: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HomViolation {
    WrongArity,
    VertexOutOfRange(VertexId),
    EdgeOutOfRange(EdgeId),
    /// The image edge does not join the images of the endpoints.
    EndpointMismatch(EdgeId),
    /// A declared `a <= b` whose image does not hold.
    OrderNotPreserved(EdgeId, EdgeId),
    PolarityNotPreserved(VertexId),
}

impl HomViolation {
    pub fn describe(&self, hom: &DiagramHom) -> String {
        let (s, t) = (&hom.source, &hom.target);
        match self {
            HomViolation::WrongArity => "maps do not cover the source graph".into(),
            HomViolation::VertexOutOfRange(v) => {
                format!("vertex `{}` maps outside the target", s.vertex_label(*v))
            }
            HomViolation::EdgeOutOfRange(e) => {
                format!("edge `{}` maps outside the target", s.edge_label(*e))
            }
            HomViolation::EndpointMismatch(e) => format!(
                "edge `{}` maps to `{}` whose endpoints differ from the mapped endpoints",
                s.edge_label(*e),
                t.edge_label(hom.emap[e.0])
            ),
            HomViolation::OrderNotPreserved(a, b) => format!(
                "`{} <= {}` is not preserved",
                s.edge_label(*a),
                s.edge_label(*b)
            ),
            HomViolation::PolarityNotPreserved(v) => {
                format!("vertex `{}` changes polarity", s.vertex_label(*v))
            }
        }
    }
}

/// Whether `a <= b` holds in `g` once the default order is applied.
pub(crate) fn order_holds(g: &LearningGraph, a: EdgeId, b: EdgeId) -> bool {
    g.declared_order().is_empty() || g.leq(a, b)
}

impl DiagramHom {
    pub fn identity(graph: &LearningGraph) -> Self {
        Self {
            source: graph.clone(),
            target: graph.clone(),
            vmap: graph.vertex_ids().collect(),
            emap: graph.edge_ids().collect(),
        }
    }

    /// Builds a map from label pairs. Every source vertex and edge must be
    /// listed.
    pub fn from_labels(
        source: &LearningGraph,
        target: &LearningGraph,
        vertices: &BTreeMap<String, String>,
        edges: &BTreeMap<String, String>,
    ) -> Result<Self, String> {
        let mut vmap = Vec::with_capacity(source.vertex_count());
        for v in source.vertex_ids() {
            let l = source.vertex_label(v);
            let image = vertices
                .get(l)
                .ok_or_else(|| format!("vertex `{l}` is not mapped"))?;
            vmap.push(
                target
                    .vertex_by_label(image)
                    .ok_or_else(|| format!("no vertex `{image}` in the target"))?,
            );
        }
        let mut emap = Vec::with_capacity(source.edge_count());
        for e in source.edge_ids() {
            let l = source.edge_label(e);
            let image = edges
                .get(l)
                .ok_or_else(|| format!("edge `{l}` is not mapped"))?;
            emap.push(
                target
                    .edge_by_label(image)
                    .ok_or_else(|| format!("no edge `{image}` in the target"))?,
            );
        }
        for l in vertices.keys() {
            if source.vertex_by_label(l).is_none() {
                return Err(format!("no vertex `{l}` in the source"));
            }
        }
        for l in edges.keys() {
            if source.edge_by_label(l).is_none() {
                return Err(format!("no edge `{l}` in the source"));
            }
        }
        Ok(Self {
            source: source.clone(),
            target: target.clone(),
            vmap,
            emap,
        })
    }

    /// Label pairs `(source, image)` for vertices and edges.
    pub fn to_labels(&self) -> (BTreeMap<String, String>, BTreeMap<String, String>) {
        let v = self
            .source
            .vertex_ids()
            .map(|v| {
                (
                    self.source.vertex_label(v).to_string(),
                    self.target.vertex_label(self.vmap[v.0]).to_string(),
                )
            })
            .collect();
        let e = self
            .source
            .edge_ids()
            .map(|e| {
                (
                    self.source.edge_label(e).to_string(),
                    self.target.edge_label(self.emap[e.0]).to_string(),
                )
            })
            .collect();
        (v, e)
    }

    pub fn is_injective(&self) -> bool {
        fn distinct<T: Ord + Copy>(xs: &[T]) -> bool {
            let mut s = xs.to_vec();
            s.sort();
            s.windows(2).all(|w| w[0] != w[1])
        }
        distinct(&self.vmap) && distinct(&self.emap)
    }

    /// `other` after `self`.
    pub fn then(&self, other: &DiagramHom) -> Option<DiagramHom> {
        if self.target != other.source {
            return None;
        }
        Some(DiagramHom {
            source: self.source.clone(),
            target: other.target.clone(),
            vmap: self.vmap.iter().map(|v| other.vmap[v.0]).collect(),
            emap: self.emap.iter().map(|e| other.emap[e.0]).collect(),
        })
    }
}

/// Every violated hom condition; empty means valid.
pub fn check_hom(hom: &DiagramHom) -> Vec<HomViolation> {
    let (s, t) = (&hom.source, &hom.target);
    if hom.vmap.len() != s.vertex_count() || hom.emap.len() != s.edge_count() {
        return vec![HomViolation::WrongArity];
    }
    let mut out = Vec::new();
    for v in s.vertex_ids() {
        if hom.vmap[v.0].0 >= t.vertex_count() {
            out.push(HomViolation::VertexOutOfRange(v));
        }
    }
    for e in s.edge_ids() {
        if hom.emap[e.0].0 >= t.edge_count() {
            out.push(HomViolation::EdgeOutOfRange(e));
        }
    }
    if !out.is_empty() {
        return out;
    }
    for e in s.edge_ids() {
        let image = hom.emap[e.0];
        if hom.vmap[s.src(e).0] != t.src(image) || hom.vmap[s.tgt(e).0] != t.tgt(image) {
            out.push(HomViolation::EndpointMismatch(e));
        }
    }
    for &(a, b) in s.declared_order() {
        if !order_holds(t, hom.emap[a.0], hom.emap[b.0]) {
            out.push(HomViolation::OrderNotPreserved(a, b));
        }
    }
    if s.polarity_labeled() && t.polarity_labeled() {
        for v in s.vertex_ids() {
            if s.polarity(v) != t.polarity(hom.vmap[v.0]) {
                out.push(HomViolation::PolarityNotPreserved(v));
            }
        }
    }
    out
}

/// Pre-assigned images for a pattern match.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialAssignment {
    pub vertices: BTreeMap<VertexId, VertexId>,
    pub edges: BTreeMap<EdgeId, EdgeId>,
}

impl PartialAssignment {
    /// Parses `a=b,c=d` where each left side names a pattern vertex or edge
    /// and the right side names a host vertex or edge of the same kind.
    pub fn parse(text: &str, pattern: &LearningGraph, host: &LearningGraph) -> Result<Self, String> {
        let mut out = PartialAssignment::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (l, r) = item
                .split_once('=')
                .ok_or_else(|| format!("expected `name=name`, found `{item}`"))?;
            let (l, r) = (l.trim(), r.trim());
            if let Some(pv) = pattern.vertex_by_label(l) {
                let hv = host
                    .vertex_by_label(r)
                    .ok_or_else(|| format!("no vertex `{r}` in the host"))?;
                out.vertices.insert(pv, hv);
            } else if let Some(pe) = pattern.edge_by_label(l) {
                let he = host
                    .edge_by_label(r)
                    .ok_or_else(|| format!("no edge `{r}` in the host"))?;
                out.edges.insert(pe, he);
            } else {
                return Err(format!("no vertex or edge `{l}` in the pattern"));
            }
        }
        Ok(out)
    }
}

struct Matcher<'a> {
    pattern: &'a LearningGraph,
    host: &'a LearningGraph,
    partial: &'a PartialAssignment,
    vmap: Vec<Option<VertexId>>,
    emap: Vec<Option<EdgeId>>,
    vused: Vec<bool>,
    eused: Vec<bool>,
    out: Vec<DiagramHom>,
}

impl Matcher<'_> {
    fn polarity_ok(&self, pv: VertexId, hv: VertexId) -> bool {
        !(self.pattern.polarity_labeled() && self.host.polarity_labeled())
            || self.pattern.polarity(pv) == self.host.polarity(hv)
    }

    /// Maps `pv` to `hv`, returning whether a new binding was made.
    fn bind_vertex(&mut self, pv: VertexId, hv: VertexId) -> Option<bool> {
        match self.vmap[pv.0] {
            Some(cur) => (cur == hv).then_some(false),
            None => {
                if self.vused[hv.0] || !self.polarity_ok(pv, hv) {
                    return None;
                }
                if let Some(&fixed) = self.partial.vertices.get(&pv) {
                    if fixed != hv {
                        return None;
                    }
                }
                self.vmap[pv.0] = Some(hv);
                self.vused[hv.0] = true;
                Some(true)
            }
        }
    }

    fn unbind_vertex(&mut self, pv: VertexId) {
        if let Some(hv) = self.vmap[pv.0].take() {
            self.vused[hv.0] = false;
        }
    }

    fn order_ok(&self, pe: EdgeId) -> bool {
        self.pattern.declared_order().iter().all(|&(a, b)| {
            if a != pe && b != pe {
                return true;
            }
            match (self.emap[a.0], self.emap[b.0]) {
                (Some(x), Some(y)) => order_holds(self.host, x, y),
                _ => true,
            }
        })
    }

    fn edges(&mut self, k: usize) {
        if k == self.pattern.edge_count() {
            self.vertices(0);
            return;
        }
        let pe = EdgeId(k);
        let (ps, pt) = (self.pattern.src(pe), self.pattern.tgt(pe));
        let candidates: Vec<EdgeId> = match self.partial.edges.get(&pe) {
            Some(&he) => vec![he],
            None => self.host.edge_ids().collect(),
        };
        for he in candidates {
            if self.eused[he.0] {
                continue;
            }
            let Some(new_s) = self.bind_vertex(ps, self.host.src(he)) else {
                continue;
            };
            if let Some(new_t) = self.bind_vertex(pt, self.host.tgt(he)) {
                self.emap[k] = Some(he);
                self.eused[he.0] = true;
                if self.order_ok(pe) {
                    self.edges(k + 1);
                }
                self.eused[he.0] = false;
                self.emap[k] = None;
                if new_t {
                    self.unbind_vertex(pt);
                }
            }
            if new_s {
                self.unbind_vertex(ps);
            }
        }
    }

    fn vertices(&mut self, k: usize) {
        if k == self.pattern.vertex_count() {
            self.out.push(DiagramHom {
                source: self.pattern.clone(),
                target: self.host.clone(),
                vmap: self.vmap.iter().map(|v| v.expect("complete")).collect(),
                emap: self.emap.iter().map(|e| e.expect("complete")).collect(),
            });
            return;
        }
        let pv = VertexId(k);
        if self.vmap[k].is_some() {
            self.vertices(k + 1);
            return;
        }
        let candidates: Vec<VertexId> = match self.partial.vertices.get(&pv) {
            Some(&hv) => vec![hv],
            None => self.host.vertex_ids().collect(),
        };
        for hv in candidates {
            if self.bind_vertex(pv, hv) == Some(true) {
                self.vertices(k + 1);
                self.unbind_vertex(pv);
            }
        }
    }
}

/// All injective homs from `pattern` into `host` extending `partial`, in
/// lexicographic order of edge images, then vertex images.
pub fn find_monomorphisms(
    pattern: &LearningGraph,
    host: &LearningGraph,
    partial: &PartialAssignment,
) -> Vec<DiagramHom> {
    if pattern.vertex_count() > host.vertex_count() || pattern.edge_count() > host.edge_count() {
        return Vec::new();
    }
    let in_range = partial
        .vertices
        .iter()
        .all(|(p, h)| p.0 < pattern.vertex_count() && h.0 < host.vertex_count())
        && partial
            .edges
            .iter()
            .all(|(p, h)| p.0 < pattern.edge_count() && h.0 < host.edge_count());
    if !in_range {
        return Vec::new();
    }
    let mut m = Matcher {
        pattern,
        host,
        partial,
        vmap: vec![None; pattern.vertex_count()],
        emap: vec![None; pattern.edge_count()],
        vused: vec![false; host.vertex_count()],
        eused: vec![false; host.edge_count()],
        out: Vec::new(),
    };
    m.edges(0);
    m.out
}
