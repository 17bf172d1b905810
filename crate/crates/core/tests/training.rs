mod common;

use std::collections::BTreeMap;

use learning_diagrams::autodiff::{Optimizer, ParamStore};
use learning_diagrams::compiler::{
    compile, evaluate, gradient, gradient_check, minibatch_rows, train, Batching, EvalMode, TrainConfig,
};
use learning_diagrams::demos::{self, Demo};
use learning_diagrams::semantics::{
    assign_semantics, Column, Dataset, EdgeModel, LearningDiagram, MetricSpec, ModelSpec, Shape, VertexData,
};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn minibatch_gradients_match_differences() {
    for demo in Demo::ALL {
        let d = demo.build(5).unwrap();
        let c = compile(&d).unwrap();
        for step in [0, 3] {
            let mode = EvalMode::MiniBatch {
                seed: 11,
                step,
                scale_to_full: true,
            };
            let gc = gradient_check(&c, &d, &mode, 1e-5, 1e-8).unwrap();
            assert!(gc.max_rel_err < 1e-4, "{} step {step}: {:e}", demo.name(), gc.max_rel_err);
        }
    }
}

#[test]
fn trained_demos_still_have_exact_gradients() {
    for demo in [Demo::Distill, Demo::Fewshot] {
        let mut d = demo.build(2).unwrap();
        let c = compile(&d).unwrap();
        let mut cfg = demo.train_config(2);
        cfg.steps = 25;
        train(&c, &mut d, &cfg).unwrap();
        let gc = gradient_check(&c, &d, &EvalMode::FullBatch, 1e-5, 1e-8).unwrap();
        assert!(gc.max_rel_err < 1e-4, "{}: {:e}", demo.name(), gc.max_rel_err);
    }
}

#[test]
fn regression_reaches_least_squares() {
    for seed in [1, 2] {
        let mut d = demos::regression(seed).unwrap();
        let (w, b, floor) = common::normal_equations(&d);
        let c = compile(&d).unwrap();
        train(&c, &mut d, &Demo::Regression.train_config(seed)).unwrap();
        let got = d.params.tensor("f", "w0").unwrap().data().to_vec();
        assert!((got[0] - w[0]).abs() < 1e-6 && (got[1] - w[1]).abs() < 1e-6);
        assert!((d.params.tensor("f", "b0").unwrap().data()[0] - b).abs() < 1e-6);
        let total = evaluate(&c, &d, &EvalMode::FullBatch).unwrap().total;
        assert!(total - floor < 1e-9 && total >= floor - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every cost is nonnegative, so more rows never lower a term.
    #[test]
    fn loss_grows_with_rows(seed in any::<u64>()) {
        let d = Demo::Distill.build(0).unwrap();
        let c = compile(&d).unwrap();
        let n = d.graph().vertex_by_label("N").unwrap();
        let len = d.space(n).dataset.as_ref().unwrap().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=len);
        let big: Vec<usize> = sample(&mut rng, len, k).into_vec();
        let small: Vec<usize> = big[..rng.gen_range(0..=big.len())].to_vec();
        let eval = |rows: Vec<usize>| {
            let mut m = BTreeMap::new();
            m.insert(n, rows);
            evaluate(&c, &d, &EvalMode::Rows(m)).unwrap()
        };
        let (a, b) = (eval(small), eval(big));
        for (x, y) in a.per_term.iter().zip(&b.per_term) {
            prop_assert!(x <= y);
        }
    }

    #[test]
    fn minibatches_partition_each_epoch(n in 1usize..40, b in 1usize..12, seed in any::<u64>()) {
        let v = learning_diagrams::graph::VertexId(0);
        let per_epoch = (n / b).max(1);
        let mut seen = Vec::new();
        for step in 0..per_epoch as u64 {
            let rows = minibatch_rows(n, b, seed, v, step);
            prop_assert_eq!(rows.len(), b.min(n));
            seen.extend(rows);
        }
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), per_epoch * b.min(n));
    }

    /// The shared backbone's gradient is the sum of the per-task gradients
    /// at any parameter values.
    #[test]
    fn backbone_gradient_is_additive(seed in 0u64..1000) {
        let fs = demos::fewshot(seed).unwrap();
        let mut glued = fs.diagram.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for key in ["m", "h1", "h2"] {
            let names: Vec<String> = glued.params.group(key).unwrap().tensors().keys().cloned().collect();
            for name in names {
                for x in glued.params.tensor_mut(key, &name).unwrap().data_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
            }
        }
        let c = compile(&glued).unwrap();
        let g = gradient(&c, &glued, &EvalMode::FullBatch).unwrap();
        let mut total = g["m"].clone();
        for t in total.values_mut() {
            for x in t.data_mut() {
                *x = 0.0;
            }
        }
        for foot in [&fs.span.left, &fs.span.right] {
            let mut foot = foot.clone();
            for key in foot.params.keys().map(str::to_string).collect::<Vec<_>>() {
                foot.params.insert_group(&key, glued.params.group(&key).unwrap().clone());
            }
            let fc = compile(&foot).unwrap();
            let fg = gradient(&fc, &foot, &EvalMode::FullBatch).unwrap();
            for (name, t) in total.iter_mut() {
                t.add_assign(&fg["m"][name]);
            }
            // each head sees only its own task
            for key in fc.param_keys.iter().filter(|k| *k != "m") {
                for (name, t) in &fg[key] {
                    prop_assert_eq!(t.data(), g[key][name].data());
                }
            }
        }
        for (name, t) in &total {
            for (a, b) in t.data().iter().zip(g["m"][name].data()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}

fn regression32(xs: &[f64], ys: &[f64]) -> LearningDiagram<f32> {
    let g = demos::regression_graph();
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let ds = Dataset::new(
        "linear",
        vec![
            Column::new("x", vec![2], to32(xs)).unwrap(),
            Column::new("y", vec![1], to32(ys)).unwrap(),
        ],
        4,
    )
    .unwrap();
    let mut vd = BTreeMap::new();
    vd.insert("l".to_string(), VertexData::data(ds));
    vd.insert("P".to_string(), VertexData::space(Shape::vector(2), MetricSpec::Infinite));
    vd.insert("R".to_string(), VertexData::space(Shape::vector(1), MetricSpec::SquaredL2));
    let mut ed = BTreeMap::new();
    ed.insert("Xtheta".to_string(), EdgeModel::projection(&["x"]));
    ed.insert("f".to_string(), EdgeModel::model(ModelSpec::Affine { input: 2, output: 1 }, "f"));
    ed.insert("Y".to_string(), EdgeModel::projection(&["y"]));
    assign_semantics(g, vd, ed, ParamStore::new(), 0).unwrap()
}

#[test]
fn single_precision_regression() {
    let d64 = demos::regression(0).unwrap();
    let (w, b, _) = common::normal_equations(&d64);
    let l = d64.graph().vertex_by_label("l").unwrap();
    let ds = d64.space(l).dataset.as_ref().unwrap();
    let mut d = regression32(ds.columns[0].data.data(), ds.columns[1].data.data());
    let c = compile(&d).unwrap();
    let cfg = TrainConfig {
        optimizer: Optimizer::sgd(0.05f32),
        steps: 2000,
        batching: Batching::Full,
        seed: 0,
    };
    train(&c, &mut d, &cfg).unwrap();
    let got = d.params.tensor("f", "w0").unwrap().data().to_vec();
    assert!((got[0] as f64 - w[0]).abs() < 1e-4);
    assert!((got[1] as f64 - w[1]).abs() < 1e-4);
    assert!((d.params.tensor("f", "b0").unwrap().data()[0] as f64 - b).abs() < 1e-4);
}
