use learning_diagrams::compiler::{compile, train};
use learning_diagrams::demos::{self, Demo};
use learning_diagrams::io::{
    diagram_from_json, diagram_to_json, load_span, parse_graph, save_span, format_graph, SpanDoc,
};

#[test]
fn demos_survive_json() {
    for demo in Demo::ALL {
        let d = demo.build(3).unwrap();
        let text = diagram_to_json(&d).unwrap();
        let back = diagram_from_json(&text, None).unwrap();
        assert_eq!(back, d, "{}", demo.name());
        assert_eq!(diagram_to_json(&back).unwrap(), text);
        let g = parse_graph(&format_graph(d.graph())).unwrap();
        assert_eq!(g.to_spec().edges, d.graph().to_spec().edges);
        assert_eq!(g.declared_order(), d.graph().declared_order());
    }
}

#[test]
fn trained_parameters_survive_json() {
    let mut d = Demo::Distill.build(0).unwrap();
    let c = compile(&d).unwrap();
    let mut cfg = Demo::Distill.train_config(0);
    cfg.steps = 10;
    train(&c, &mut d, &cfg).unwrap();
    let back = diagram_from_json(&diagram_to_json(&d).unwrap(), None).unwrap();
    for (k, g) in d.params.groups() {
        assert!(g.same_values(back.params.group(k).unwrap()), "{k}");
    }
}

#[test]
fn spans_survive_json() {
    let fs = demos::fewshot(0).unwrap();
    let text = serde_json::to_string(&save_span(&fs.span).unwrap()).unwrap();
    let doc: SpanDoc = serde_json::from_str(&text).unwrap();
    assert_eq!(load_span(&doc, None).unwrap(), fs.span);
}
