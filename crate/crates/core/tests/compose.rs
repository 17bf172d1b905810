use std::collections::BTreeMap;

use learning_diagrams::autodiff::ParamStore;
use learning_diagrams::compiler::compile;
use learning_diagrams::compose::{
    check_hom, find_monomorphisms, iterate_pushouts, pushout, Attachment, CompositionError, DiagramHom,
    PartialAssignment, Span,
};
use learning_diagrams::demos;
use learning_diagrams::graph::{GraphSpec, LearningGraph};
use learning_diagrams::semantics::{assign_semantics, EdgeModel, MetricSpec, PureFn, Shape, VertexData};
use learning_diagrams::Diagram;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trivial(g: LearningGraph) -> Diagram {
    let vd = g
        .vertex_ids()
        .map(|v| (g.vertex_label(v).to_string(), VertexData::space(Shape::vector(1), MetricSpec::L2)))
        .collect();
    let ed = g
        .edge_ids()
        .map(|e| (g.edge_label(e).to_string(), EdgeModel::pure(PureFn::Identity)))
        .collect();
    assign_semantics(g, vd, ed, ParamStore::new(), 0).unwrap()
}

struct Sample {
    span: Span,
    apex_v: usize,
    apex_e: usize,
}

/// Left foot, a sub-graph of it as apex, and a right foot extending the
/// apex. Every vertex carries a global rank and edges climb it, so the
/// glued graph stays acyclic.
fn random_span(seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nl = rng.gen_range(1..=6);
    let ranks: Vec<u32> = (0..nl).map(|_| rng.gen_range(0..100)).collect();
    let mut lspec = GraphSpec::new();
    for i in 0..nl {
        lspec = lspec.vertex(&format!("v{i}"));
    }
    let mut ledges = Vec::new();
    for e in 0..rng.gen_range(0..=8) {
        let (a, b) = (rng.gen_range(0..nl), rng.gen_range(0..nl));
        if ranks[a] == ranks[b] {
            continue;
        }
        let (s, t) = if ranks[a] < ranks[b] { (a, b) } else { (b, a) };
        lspec = lspec.edge(&format!("e{e}"), &format!("v{s}"), &format!("v{t}"));
        ledges.push((format!("e{e}"), s, t));
    }
    let left = trivial(lspec.build().unwrap());

    let apex_vs: Vec<usize> = (0..nl).filter(|_| rng.gen_bool(0.5)).collect();
    let apex_es: Vec<&(String, usize, usize)> = ledges
        .iter()
        .filter(|(_, s, t)| apex_vs.contains(s) && apex_vs.contains(t) && rng.gen_bool(0.6))
        .collect();
    let mut aspec = GraphSpec::new();
    let mut rspec = GraphSpec::new();
    let mut rranks = Vec::new();
    for &v in &apex_vs {
        aspec = aspec.vertex(&format!("v{v}"));
        rspec = rspec.vertex(&format!("v{v}"));
        rranks.push((format!("v{v}"), ranks[v]));
    }
    for (l, s, t) in &apex_es {
        aspec = aspec.edge(l, &format!("v{s}"), &format!("v{t}"));
        rspec = rspec.edge(l, &format!("v{s}"), &format!("v{t}"));
    }
    for i in 0..rng.gen_range(0..4) {
        let label = format!("r{i}");
        rspec = rspec.vertex(&label);
        rranks.push((label, rng.gen_range(0..100)));
    }
    if !rranks.is_empty() {
        for e in 0..rng.gen_range(0..=6) {
            let a = rranks.choose(&mut rng).unwrap().clone();
            let b = rranks.choose(&mut rng).unwrap().clone();
            if a.1 == b.1 {
                continue;
            }
            let (s, t) = if a.1 < b.1 { (a, b) } else { (b, a) };
            rspec = rspec.edge(&format!("s{e}"), &s.0, &t.0);
        }
    }
    let right = trivial(rspec.build().unwrap());
    let apex = aspec.build().unwrap();
    let leg = |foot: &Diagram| {
        let (v, e) = DiagramHom::identity(&apex).to_labels();
        DiagramHom::from_labels(&apex, foot.graph(), &v, &e).unwrap()
    };
    let (ll, rl) = (leg(&left), leg(&right));
    Sample {
        apex_v: apex.vertex_count(),
        apex_e: apex.edge_count(),
        span: Span::new(apex, ll, rl, left, right).unwrap(),
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.find(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        self.0[a] = b;
    }
    fn classes(&mut self) -> usize {
        (0..self.0.len()).filter(|&x| self.find(x) == x).count()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pushout_counts_match_union_find(seed in any::<u64>()) {
        let s = random_span(seed);
        let (l, r) = (s.span.left.graph(), s.span.right.graph());
        let mut uv = UnionFind((0..l.vertex_count() + r.vertex_count()).collect());
        let mut ue = UnionFind((0..l.edge_count() + r.edge_count()).collect());
        for a in s.span.apex.vertex_ids() {
            uv.union(s.span.left_leg.vmap[a.0].0, l.vertex_count() + s.span.right_leg.vmap[a.0].0);
        }
        for a in s.span.apex.edge_ids() {
            ue.union(s.span.left_leg.emap[a.0].0, l.edge_count() + s.span.right_leg.emap[a.0].0);
        }
        let po = pushout(&s.span).unwrap();
        let g = po.diagram.graph();
        prop_assert_eq!(g.vertex_count(), uv.classes());
        prop_assert_eq!(g.edge_count(), ue.classes());
        prop_assert_eq!(g.vertex_count(), l.vertex_count() + r.vertex_count() - s.apex_v);
        prop_assert_eq!(g.edge_count(), l.edge_count() + r.edge_count() - s.apex_e);
        prop_assert!(check_hom(&po.left_inclusion).is_empty());
        prop_assert!(check_hom(&po.right_inclusion).is_empty());
        prop_assert!(po.left_inclusion.is_injective() && po.right_inclusion.is_injective());
        let a = s.span.left_leg.then(&po.left_inclusion).unwrap();
        let b = s.span.right_leg.then(&po.right_inclusion).unwrap();
        prop_assert_eq!(a.vmap, b.vmap);
        prop_assert_eq!(a.emap, b.emap);
        // left ids survive unchanged
        prop_assert_eq!(po.left_inclusion.vmap, DiagramHom::identity(l).vmap);
    }
}

fn backbone_attachment(seed: u64, i: usize) -> Attachment {
    let right = demos::classifier_square(seed, i).unwrap();
    let apex = demos::backbone_apex();
    let (v, e) = DiagramHom::identity(&apex).to_labels();
    let right_leg = DiagramHom::from_labels(&apex, right.graph(), &v, &e).unwrap();
    Attachment {
        apex,
        left_vertices: v,
        left_edges: e,
        right_leg,
        right,
    }
}

#[test]
fn three_heads_share_one_backbone() {
    let base = demos::classifier_square(0, 1).unwrap();
    let atts = [backbone_attachment(0, 2), backbone_attachment(0, 3)];
    let it = iterate_pushouts(base, &atts).unwrap();
    let g = it.diagram.graph();
    assert_eq!((g.vertex_count(), g.edge_count()), (8, 10));
    let keys: Vec<&str> = it.diagram.params.keys().collect();
    assert_eq!(keys, ["h1", "h2", "h3", "m"]);
    assert_eq!(compile(&it.diagram).unwrap().terms.len(), 3);
    assert_eq!(it.inclusions.len(), 3);
    for h in &it.inclusions {
        assert!(check_hom(h).is_empty());
    }
    let m = g.edge_by_label("m").unwrap();
    for (h, att) in it.inclusions[1..].iter().zip(&atts) {
        assert_eq!(h.emap[att.right.graph().edge_by_label("m").unwrap().0], m);
    }
}

#[test]
fn empty_attachment_list_is_identity() {
    let base = demos::classifier_square(0, 1).unwrap();
    let it = iterate_pushouts(base.clone(), &[]).unwrap();
    assert_eq!(it.diagram, base);
    assert_eq!(it.inclusions, vec![DiagramHom::identity(base.graph())]);
}

#[test]
fn attaching_twice_duplicates_the_task() {
    let base = demos::classifier_square(0, 1).unwrap();
    let att = backbone_attachment(0, 2);
    let it = iterate_pushouts(base, &[att.clone(), att]).unwrap();
    let g = it.diagram.graph();
    assert_eq!((g.vertex_count(), g.edge_count()), (8, 10));
    assert!(g.vertex_by_label("N2_2").is_some());
    assert!(g.edge_by_label("h2_2").is_some());
    let keys: Vec<&str> = it.diagram.params.keys().collect();
    assert_eq!(keys, ["h1", "h2", "m"]);
    assert_eq!(compile(&it.diagram).unwrap().terms.len(), 3);
}

#[test]
fn unknown_attachment_label() {
    let base = demos::classifier_square(0, 1).unwrap();
    let mut att = backbone_attachment(0, 2);
    att.left_edges.insert("m".into(), "nope".into());
    assert!(matches!(iterate_pushouts(base, &[att]), Err(CompositionError::UnknownLabel(_))));
}

#[test]
fn gluing_that_closes_a_cycle_is_rejected() {
    let l = trivial(GraphSpec::new().vertices(&["a", "b"]).edge("f", "a", "b").build().unwrap());
    let r = trivial(GraphSpec::new().vertices(&["a", "b"]).edge("g", "b", "a").build().unwrap());
    let apex = GraphSpec::new().vertices(&["a", "b"]).build().unwrap();
    let leg = |d: &Diagram| {
        let (v, e) = DiagramHom::identity(&apex).to_labels();
        DiagramHom::from_labels(&apex, d.graph(), &v, &e).unwrap()
    };
    let span = Span::new(apex.clone(), leg(&l), leg(&r), l, r).unwrap();
    assert!(matches!(pushout(&span), Err(CompositionError::CycleCreated(_))));
}

#[test]
fn non_injective_leg_is_rejected() {
    let foot = trivial(GraphSpec::new().vertices(&["a"]).build().unwrap());
    let apex = GraphSpec::new().vertices(&["x", "y"]).build().unwrap();
    let mut v = BTreeMap::new();
    v.insert("x".to_string(), "a".to_string());
    v.insert("y".to_string(), "a".to_string());
    let leg = DiagramHom::from_labels(&apex, foot.graph(), &v, &BTreeMap::new()).unwrap();
    let err = Span::new(apex.clone(), leg.clone(), leg, foot.clone(), foot).unwrap_err();
    assert!(matches!(err, CompositionError::SemanticMismatch(_)));
}

#[test]
fn encoder_pattern_matches_once() {
    let host = demos::captionshape(0).unwrap();
    let pattern = demos::single_edge_pattern();
    assert_eq!(find_monomorphisms(&pattern, host.graph(), &PartialAssignment::default()).len(), 4);
    let partial = PartialAssignment::parse("Edge=CNN_x_Y", &pattern, host.graph()).unwrap();
    let found = find_monomorphisms(&pattern, host.graph(), &partial);
    assert_eq!(found.len(), 1);
    let frozen = demos::freeze_encoder(&host).unwrap();
    let e = host.graph().edge_by_label("CNN_x_Y").unwrap();
    assert!(frozen.model(e).frozen && !host.model(e).frozen);
    let c = compile(&frozen).unwrap();
    assert!(!c.param_keys.contains(demos::ENCODER));
}
