use std::collections::{BTreeMap, BTreeSet};

use crate::autodiff::ParamStore;
use crate::compose::{check_hom, CompositionError, DiagramHom};
use crate::graph::{EdgeId, EdgeSpec, GraphError, GraphSpec, LearningGraph, VertexId};
use crate::scalar::Scalar;
use crate::semantics::{assign_semantics, EdgeModel, LearningDiagram, SemanticsError, VertexData};

/// Two diagrams and a shared apex graph mapped into both.
#[derive(Clone, Debug, PartialEq)]
pub struct Span<T: Scalar = f64> {
    pub apex: LearningGraph,
    pub left_leg: DiagramHom,
    pub right_leg: DiagramHom,
    pub left: LearningDiagram<T>,
    pub right: LearningDiagram<T>,
}

impl<T: Scalar> Span<T> {
    /// Checks both legs and the semantic agreement of identified parts.
    pub fn new(
        apex: LearningGraph,
        left_leg: DiagramHom,
        right_leg: DiagramHom,
        left: LearningDiagram<T>,
        right: LearningDiagram<T>,
    ) -> Result<Self, CompositionError> {
        let span = Self {
            apex,
            left_leg,
            right_leg,
            left,
            right,
        };
        span.validate()?;
        Ok(span)
    }

    pub fn validate(&self) -> Result<(), CompositionError> {
        for (leg, foot, side) in [
            (&self.left_leg, &self.left, "left"),
            (&self.right_leg, &self.right, "right"),
        ] {
            if leg.source != self.apex || leg.target != *foot.graph() {
                return Err(CompositionError::SemanticMismatch(format!(
                    "{side} leg does not run from the apex to the {side} foot"
                )));
            }
            let v = check_hom(leg);
            if !v.is_empty() {
                return Err(CompositionError::NotAHom(
                    v.iter().map(|x| x.describe(leg)).collect(),
                ));
            }
            if !leg.is_injective() {
                return Err(CompositionError::SemanticMismatch(format!(
                    "{side} leg is not injective"
                )));
            }
        }
        for a in self.apex.vertex_ids() {
            let (l, r) = (self.left_leg.vmap[a.0], self.right_leg.vmap[a.0]);
            if self.left.space(l) != self.right.space(r) {
                return Err(CompositionError::SemanticMismatch(format!(
                    "identified vertices `{}` and `{}` carry different spaces",
                    self.left.graph().vertex_label(l),
                    self.right.graph().vertex_label(r)
                )));
            }
            let (lg, rg) = (self.left.graph(), self.right.graph());
            if lg.polarity_labeled() && rg.polarity_labeled() && lg.polarity(l) != rg.polarity(r) {
                return Err(CompositionError::SemanticMismatch(format!(
                    "identified vertices `{}` and `{}` differ in polarity",
                    lg.vertex_label(l),
                    rg.vertex_label(r)
                )));
            }
        }
        for a in self.apex.edge_ids() {
            let (l, r) = (self.left_leg.emap[a.0], self.right_leg.emap[a.0]);
            if self.left.model(l) != self.right.model(r) {
                return Err(CompositionError::SemanticMismatch(format!(
                    "identified edges `{}` and `{}` carry different models",
                    self.left.graph().edge_label(l),
                    self.right.graph().edge_label(r)
                )));
            }
        }
        let (ls, rs) = (self.left.param_specs()?, self.right.param_specs()?);
        for (key, spec) in &ls {
            if let Some(other) = rs.get(key) {
                let same_values = match (self.left.params.group(key), self.right.params.group(key)) {
                    (Some(a), Some(b)) => a.same_values(b),
                    _ => false,
                };
                if spec != other || !same_values {
                    return Err(CompositionError::SemanticMismatch(format!(
                        "parameter key `{key}` differs between the feet"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The glued diagram and the inclusion of each foot.
#[derive(Clone, Debug, PartialEq)]
pub struct Pushout<T: Scalar = f64> {
    pub diagram: LearningDiagram<T>,
    pub left_inclusion: DiagramHom,
    pub right_inclusion: DiagramHom,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    /// The smaller root wins, so left-foot elements stay representatives.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
    }

    /// Dense class ids in order of first representative.
    fn classes(&mut self) -> (Vec<usize>, usize) {
        let n = self.0.len();
        let mut id = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut next = 0;
        for x in 0..n {
            let r = self.find(x);
            if id[r] == usize::MAX {
                id[r] = next;
                next += 1;
            }
            out[x] = id[r];
        }
        (out, next)
    }
}

fn unique_label(taken: &BTreeSet<String>, label: &str) -> String {
    if !taken.contains(label) {
        return label.to_string();
    }
    (2..)
        .map(|i| format!("{label}_{i}"))
        .find(|l| !taken.contains(l))
        .expect("unbounded")
}

fn graph_error(err: GraphError) -> CompositionError {
    match err {
        GraphError::CycleDetected(v) => CompositionError::CycleCreated(v),
        GraphError::PolarityViolation(e) => CompositionError::PolarityViolation(e),
        other => CompositionError::SemanticMismatch(other.to_string()),
    }
}

/// Glues the feet along the apex. Left-foot vertices and edges keep their
/// ids and labels; right-only parts follow, renamed on label collisions.
pub fn pushout<T: Scalar>(span: &Span<T>) -> Result<Pushout<T>, CompositionError> {
    span.validate()?;
    let (lg, rg) = (span.left.graph(), span.right.graph());
    let (nlv, nle) = (lg.vertex_count(), lg.edge_count());

    let mut uv = UnionFind::new(nlv + rg.vertex_count());
    let mut ue = UnionFind::new(nle + rg.edge_count());
    for a in span.apex.vertex_ids() {
        uv.union(span.left_leg.vmap[a.0].0, nlv + span.right_leg.vmap[a.0].0);
    }
    for a in span.apex.edge_ids() {
        ue.union(span.left_leg.emap[a.0].0, nle + span.right_leg.emap[a.0].0);
    }
    let (vclass, nv) = uv.classes();
    let (eclass, ne) = ue.classes();

    let mut vlabels: Vec<Option<String>> = vec![None; nv];
    let mut taken = BTreeSet::new();
    for v in lg.vertex_ids() {
        let l = lg.vertex_label(v).to_string();
        taken.insert(l.clone());
        vlabels[vclass[v.0]] = Some(l);
    }
    for v in rg.vertex_ids() {
        let c = vclass[nlv + v.0];
        if vlabels[c].is_none() {
            let l = unique_label(&taken, rg.vertex_label(v));
            taken.insert(l.clone());
            vlabels[c] = Some(l);
        }
    }
    let vlabels: Vec<String> = vlabels.into_iter().map(|l| l.expect("every class labelled")).collect();

    let mut elabels: Vec<Option<String>> = vec![None; ne];
    let mut ends: Vec<(usize, usize)> = vec![(0, 0); ne];
    let mut taken = BTreeSet::new();
    for e in lg.edge_ids() {
        let l = lg.edge_label(e).to_string();
        taken.insert(l.clone());
        elabels[eclass[e.0]] = Some(l);
        ends[eclass[e.0]] = (vclass[lg.src(e).0], vclass[lg.tgt(e).0]);
    }
    for e in rg.edge_ids() {
        let c = eclass[nle + e.0];
        if elabels[c].is_none() {
            let l = unique_label(&taken, rg.edge_label(e));
            taken.insert(l.clone());
            elabels[c] = Some(l);
            ends[c] = (vclass[nlv + rg.src(e).0], vclass[nlv + rg.tgt(e).0]);
        }
    }
    let elabels: Vec<String> = elabels.into_iter().map(|l| l.expect("every class labelled")).collect();

    let mut order = BTreeSet::new();
    for &(a, b) in lg.declared_order() {
        order.insert((eclass[a.0], eclass[b.0]));
    }
    for &(a, b) in rg.declared_order() {
        order.insert((eclass[nle + a.0], eclass[nle + b.0]));
    }
    let labeled = lg.polarity_labeled() || rg.polarity_labeled();
    let mut indexing = BTreeSet::new();
    for v in lg.vertex_ids().filter(|&v| lg.is_indexing(v)) {
        indexing.insert(vclass[v.0]);
    }
    for v in rg.vertex_ids().filter(|&v| rg.is_indexing(v)) {
        indexing.insert(vclass[nlv + v.0]);
    }
    let name = match (lg.name(), rg.name()) {
        (Some(a), Some(b)) if a != b => Some(format!("{a}_{b}")),
        (Some(a), _) => Some(a.to_string()),
        (None, b) => b.map(str::to_string),
    };
    let spec = GraphSpec {
        name,
        vertices: vlabels.clone(),
        edges: (0..ne)
            .map(|c| EdgeSpec {
                label: elabels[c].clone(),
                src: vlabels[ends[c].0].clone(),
                tgt: vlabels[ends[c].1].clone(),
            })
            .collect(),
        order: order
            .iter()
            .map(|&(a, b)| (elabels[a].clone(), elabels[b].clone()))
            .collect(),
        indexing: labeled.then(|| indexing.iter().map(|&c| vlabels[c].clone()).collect()),
    };
    let glued = LearningGraph::build(&spec).map_err(graph_error)?;

    let mut vdata: BTreeMap<String, VertexData<T>> = BTreeMap::new();
    for (foot, offset) in [(&span.left, 0), (&span.right, nlv)] {
        for v in foot.graph().vertex_ids() {
            let label = &vlabels[vclass[offset + v.0]];
            let s = foot.space(v);
            vdata.entry(label.clone()).or_insert_with(|| VertexData {
                shape: Some(s.shape.clone()),
                metric: s.metric.clone(),
                dataset: s.dataset.clone(),
            });
        }
    }
    let mut edata: BTreeMap<String, EdgeModel<T>> = BTreeMap::new();
    for (foot, offset) in [(&span.left, 0), (&span.right, nle)] {
        for e in foot.graph().edge_ids() {
            let label = &elabels[eclass[offset + e.0]];
            edata
                .entry(label.clone())
                .or_insert_with(|| foot.model(e).clone());
        }
    }
    let mut params: ParamStore<T> = span.left.params.clone();
    for (k, g) in span.right.params.groups() {
        if !params.contains(k) {
            params.insert_group(k.clone(), g.clone());
        }
    }
    let diagram = assign_semantics(glued.clone(), vdata, edata, params, 0).map_err(|e| match e {
        SemanticsError::SharedKeySpecMismatch(k) => {
            CompositionError::SemanticMismatch(format!("parameter key `{k}` differs between the feet"))
        }
        other => CompositionError::Semantics(other),
    })?;

    let left_inclusion = DiagramHom {
        source: lg.clone(),
        target: glued.clone(),
        vmap: (0..nlv).map(|v| VertexId(vclass[v])).collect(),
        emap: (0..nle).map(|e| EdgeId(eclass[e])).collect(),
    };
    let right_inclusion = DiagramHom {
        source: rg.clone(),
        target: glued,
        vmap: (0..rg.vertex_count()).map(|v| VertexId(vclass[nlv + v])).collect(),
        emap: (0..rg.edge_count()).map(|e| EdgeId(eclass[nle + e])).collect(),
    };
    Ok(Pushout {
        diagram,
        left_inclusion,
        right_inclusion,
    })
}

/// A span whose left foot is whatever diagram it is attached to; its left
/// leg is given by labels into that diagram.
#[derive(Clone, Debug, PartialEq)]
pub struct Attachment<T: Scalar = f64> {
    pub apex: LearningGraph,
    pub left_vertices: BTreeMap<String, String>,
    pub left_edges: BTreeMap<String, String>,
    pub right_leg: DiagramHom,
    pub right: LearningDiagram<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IteratedPushout<T: Scalar = f64> {
    pub diagram: LearningDiagram<T>,
    /// Base first, then each attachment's foot, into the final diagram.
    pub inclusions: Vec<DiagramHom>,
}

/// Folds [`pushout`] over the attachments, starting from `base`.
pub fn iterate_pushouts<T: Scalar>(
    base: LearningDiagram<T>,
    attachments: &[Attachment<T>],
) -> Result<IteratedPushout<T>, CompositionError> {
    let mut current = base;
    let mut inclusions = vec![DiagramHom::identity(current.graph())];
    for att in attachments {
        let left_leg = DiagramHom::from_labels(
            &att.apex,
            current.graph(),
            &att.left_vertices,
            &att.left_edges,
        )
        .map_err(CompositionError::UnknownLabel)?;
        let span = Span::new(
            att.apex.clone(),
            left_leg,
            att.right_leg.clone(),
            current,
            att.right.clone(),
        )?;
        let po = pushout(&span)?;
        inclusions = inclusions
            .iter()
            .map(|h| h.then(&po.left_inclusion).expect("inclusion chain"))
            .collect();
        inclusions.push(po.right_inclusion);
        current = po.diagram;
    }
    Ok(IteratedPushout {
        diagram: current,
        inclusions,
    })
}
