//! Self-contained demo diagrams with seeded synthetic data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Optimizer, ParamGroup, ParamStore};
use crate::compiler::{compile, train, Batching, CompileError, TrainConfig};
use crate::compose::{
    apply_on_image, find_monomorphisms, pushout, CompositionError, DiagramHom, EdgeAction,
    PartialAssignment, Span, VertexAction,
};
use crate::graph::{GraphSpec, LearningGraph};
use crate::semantics::{
    assign_semantics, Column, Dataset, EdgeKind, EdgeModel, LearningDiagram, MetricSpec, ModelSpec,
    ProjectionKey, PureFn, SemanticsError, Shape, VertexData,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Demo {
    Regression,
    Distill,
    Fewshot,
    Captionshape,
}

impl Demo {
    pub const ALL: [Demo; 4] = [Demo::Regression, Demo::Distill, Demo::Fewshot, Demo::Captionshape];

    pub fn name(self) -> &'static str {
        match self {
            Demo::Regression => "regression",
            Demo::Distill => "distill",
            Demo::Fewshot => "fewshot",
            Demo::Captionshape => "captionshape",
        }
    }

    pub fn parse(s: &str) -> Option<Demo> {
        Demo::ALL.into_iter().find(|d| d.name() == s)
    }

    pub fn build(self, seed: u64) -> Result<LearningDiagram, DemoError> {
        match self {
            Demo::Regression => regression(seed),
            Demo::Distill => distill(seed),
            Demo::Fewshot => fewshot(seed).map(|f| f.diagram),
            Demo::Captionshape => captionshape(seed).and_then(|d| freeze_encoder(&d)),
        }
    }

    /// Training schedule used by `demo`.
    pub fn train_config(self, seed: u64) -> TrainConfig {
        let (optimizer, steps) = match self {
            Demo::Regression => (Optimizer::sgd(0.05), 2000),
            Demo::Distill => (Optimizer::adam(0.02), 400),
            Demo::Fewshot => (Optimizer::sgd(0.01), 300),
            Demo::Captionshape => (Optimizer::adam(0.01), 300),
        };
        TrainConfig {
            optimizer,
            steps,
            batching: Batching::Full,
            seed,
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
}

fn vmap<T>(items: Vec<(&str, T)>) -> BTreeMap<String, T> {
    items.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Coefficients of the linear rule behind the regression data.
pub const REGRESSION_WEIGHTS: [f64; 2] = [1.5, -0.8];
pub const REGRESSION_BIAS: f64 = 0.3;
pub const REGRESSION_ROWS: usize = 16;

/// The prediction triangle: `Y` and `Xtheta . f` from `l` to `R`.
pub fn regression_graph() -> LearningGraph {
    GraphSpec::new()
        .named("regression")
        .vertices(&["l", "P", "R"])
        .edge("Xtheta", "l", "P")
        .edge("f", "P", "R")
        .edge("Y", "l", "R")
        .order("Y", "Xtheta")
        .indexing(&["l"])
        .build()
        .expect("static graph")
}

/// Linear data with Gaussian noise, an affine model `f`, squared error.
pub fn regression(seed: u64) -> Result<LearningDiagram, DemoError> {
    let mut r = rng(seed, 1);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let n = REGRESSION_ROWS;
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let y = REGRESSION_WEIGHTS[0] * x[0] + REGRESSION_WEIGHTS[1] * x[1] + REGRESSION_BIAS
            + noise.sample(&mut r);
        xs.extend(x);
        ys.push(y);
    }
    let ds = Dataset::new(
        "linear",
        vec![Column::new("x", vec![2], xs)?, Column::new("y", vec![1], ys)?],
        4,
    )?;
    let vd = vmap(vec![
        ("l", VertexData::data(ds)),
        ("P", VertexData::space(Shape::vector(2), MetricSpec::Infinite)),
        ("R", VertexData::space(Shape::vector(1), MetricSpec::SquaredL2)),
    ]);
    let ed = vmap(vec![
        ("Xtheta", EdgeModel::projection(&["x"])),
        ("f", EdgeModel::model(ModelSpec::Affine { input: 2, output: 1 }, "f")),
        ("Y", EdgeModel::projection(&["y"])),
    ]);
    Ok(assign_semantics(regression_graph(), vd, ed, ParamStore::new(), seed)?)
}

const BLOB_CENTERS: [[f64; 2]; 3] = [[0.0, 2.0], [-1.7, -1.0], [1.7, -1.0]];

fn blobs(seed: u64, per_class: usize) -> Result<Dataset, SemanticsError> {
    let mut r = rng(seed, 2);
    let spread = Normal::new(0.0, 0.8).expect("valid normal");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..per_class {
        for (k, c) in BLOB_CENTERS.iter().enumerate() {
            xs.push(c[0] + spread.sample(&mut r));
            xs.push(c[1] + spread.sample(&mut r));
            ys.extend(one_hot(k, 3));
        }
    }
    Dataset::new(
        "blobs",
        vec![Column::new("x", vec![2], xs)?, Column::new("y", vec![3], ys)?],
        12,
    )
}

pub fn distill_graph() -> LearningGraph {
    GraphSpec::new()
        .named("distill")
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
        .expect("static graph")
}

pub const TEACHER: &str = "teacher";
pub const STUDENT: &str = "student";

fn teacher_spec() -> ModelSpec {
    ModelSpec::Mlp {
        input: 2,
        hidden: vec![16],
        output: 3,
    }
}

/// The teacher alone, trained on labels before distillation.
pub fn teacher_diagram(seed: u64) -> Result<LearningDiagram, DemoError> {
    let g = GraphSpec::new()
        .named("teacher")
        .vertices(&["N", "X", "T", "Y"])
        .edge("pi1", "N", "X")
        .edge("pi2", "N", "Y")
        .edge("t", "X", "T")
        .edge("sigma_y", "T", "Y")
        .order("pi2", "pi1")
        .indexing(&["N"])
        .build()
        .expect("static graph");
    let vd = vmap(vec![
        ("N", VertexData::data(blobs(seed, 20)?)),
        ("X", VertexData::space(Shape::vector(2), MetricSpec::Infinite)),
        ("T", VertexData::space(Shape::vector(3), MetricSpec::Infinite)),
        ("Y", VertexData::space(Shape::vector(3), MetricSpec::CrossEntropy)),
    ]);
    let ed = vmap(vec![
        ("pi1", EdgeModel::projection(&["x"])),
        ("pi2", EdgeModel::projection(&["y"])),
        ("t", EdgeModel::model(teacher_spec(), TEACHER)),
        ("sigma_y", EdgeModel::pure(PureFn::Softmax { temperature: 1.0 })),
    ]);
    Ok(assign_semantics(g, vd, ed, ParamStore::new(), seed)?)
}

/// Knowledge distillation on three Gaussian blobs. The teacher is
/// pretrained here and frozen; the student sees labels through
/// cross-entropy at `Y` and the teacher through temperature-2 KL at `G`.
pub fn distill(seed: u64) -> Result<LearningDiagram, DemoError> {
    let mut teacher = teacher_diagram(seed)?;
    let c = compile(&teacher)?;
    let cfg = TrainConfig {
        optimizer: Optimizer::adam(0.05),
        steps: 300,
        batching: Batching::Full,
        seed,
    };
    train(&c, &mut teacher, &cfg)?;
    let mut params = ParamStore::new();
    let trained = teacher.params.group(TEACHER).expect("teacher key");
    params.insert_group(TEACHER, ParamGroup::new(trained.tensors().clone()));

    let vd = vmap(vec![
        ("N", VertexData::data(blobs(seed, 20)?)),
        ("X", VertexData::space(Shape::vector(2), MetricSpec::Infinite)),
        ("T", VertexData::space(Shape::vector(3), MetricSpec::Infinite)),
        ("S", VertexData::space(Shape::vector(3), MetricSpec::Infinite)),
        (
            "G",
            VertexData::space(Shape::vector(3), MetricSpec::KlDivergence { temperature: 2.0 }),
        ),
        ("Y", VertexData::space(Shape::vector(3), MetricSpec::CrossEntropy)),
    ]);
    let ed = vmap(vec![
        ("pi1", EdgeModel::projection(&["x"])),
        ("pi2", EdgeModel::projection(&["y"])),
        (
            "t",
            EdgeModel::frozen(EdgeKind::Parameterized {
                spec: teacher_spec(),
                key: TEACHER.into(),
            }),
        ),
        (
            "s",
            EdgeModel::model(
                ModelSpec::Mlp {
                    input: 2,
                    hidden: vec![8],
                    output: 3,
                },
                STUDENT,
            ),
        ),
        ("sigma_t", EdgeModel::pure(PureFn::Identity)),
        ("sigma_s", EdgeModel::pure(PureFn::Identity)),
        ("sigma_y", EdgeModel::pure(PureFn::Softmax { temperature: 1.0 })),
    ]);
    Ok(assign_semantics(distill_graph(), vd, ed, params, seed)?)
}

pub const BACKBONE: &str = "m";

fn task_data(seed: u64, task: usize) -> Result<Dataset, SemanticsError> {
    let mut r = rng(seed, 10 + task as u64);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for _ in 0..24 {
        let x = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let positive = if task == 1 { x[0] + 0.3 * x[1] > 0.0 } else { x[1] - 0.3 * x[0] > 0.0 };
        xs.extend(x);
        ys.extend(one_hot(positive as usize, 2));
    }
    Dataset::new(&format!("task{task}"), vec![Column::new("x", vec![2], xs)?, Column::new("y", vec![2], ys)?], 8)
}

fn backbone_spec() -> ModelSpec {
    ModelSpec::Mlp {
        input: 2,
        hidden: vec![8],
        output: 4,
    }
}

/// Task `i`'s data: `N_i` with projections onto the image space `X` and the
/// label space `Y_i`.
pub fn dataset_piece(seed: u64, i: usize) -> Result<LearningDiagram, DemoError> {
    let (n, y, ex, ey) = (format!("N{i}"), format!("Y{i}"), format!("x{i}"), format!("y{i}"));
    let g = GraphSpec::new()
        .named(&format!("data{i}"))
        .vertices(&[&n, "X", &y])
        .edge(&ex, &n, "X")
        .edge(&ey, &n, &y)
        .order(&ey, &ex)
        .indexing(&[&n])
        .build()
        .expect("static graph");
    let vd = vmap(vec![
        (n.as_str(), VertexData::data(task_data(seed, i)?)),
        ("X", VertexData::space(Shape::vector(2), MetricSpec::Infinite)),
        (y.as_str(), VertexData::space(Shape::vector(2), MetricSpec::CrossEntropy)),
    ]);
    let ed = vmap(vec![
        (ex.as_str(), EdgeModel::projection(&["x"])),
        (ey.as_str(), EdgeModel::projection(&["y"])),
    ]);
    Ok(assign_semantics(g, vd, ed, ParamStore::new(), seed)?)
}

/// Task `i`'s classifier: backbone `m` into features `F`, head `h_i`.
pub fn classifier_piece(seed: u64, i: usize) -> Result<LearningDiagram, DemoError> {
    let (y, h) = (format!("Y{i}"), format!("h{i}"));
    let g = GraphSpec::new()
        .named(&format!("classifier{i}"))
        .vertices(&["X", "F", &y])
        .edge("m", "X", "F")
        .edge(&h, "F", &y)
        .indexing(&[])
        .build()
        .expect("static graph");
    let vd = vmap(vec![
        ("X", VertexData::space(Shape::vector(2), MetricSpec::Infinite)),
        ("F", VertexData::space(Shape::vector(4), MetricSpec::Infinite)),
        (y.as_str(), VertexData::space(Shape::vector(2), MetricSpec::CrossEntropy)),
    ]);
    let ed = vmap(vec![
        ("m", EdgeModel::model(backbone_spec(), BACKBONE)),
        (h.as_str(), EdgeModel::model(ModelSpec::SoftmaxHead { input: 4, output: 2 }, &h)),
    ]);
    Ok(assign_semantics(g, vd, ed, ParamStore::new(), seed)?)
}

fn discrete(labels: &[&str]) -> LearningGraph {
    let mut spec = GraphSpec::new().vertices(labels);
    spec.indexing = None;
    spec.build().expect("static graph")
}

fn identity_leg(apex: &LearningGraph, foot: &LearningGraph) -> DiagramHom {
    let (v, e) = DiagramHom::identity(apex).to_labels();
    DiagramHom::from_labels(apex, foot, &v, &e).expect("apex labels exist in the foot")
}

/// Task `i`'s square: its data and classifier glued along `X` and `Y_i`.
pub fn classifier_square(seed: u64, i: usize) -> Result<LearningDiagram, DemoError> {
    let data = dataset_piece(seed, i)?;
    let clf = classifier_piece(seed, i)?;
    let apex = discrete(&["X", &format!("Y{i}")]);
    let span = Span::new(
        apex.clone(),
        identity_leg(&apex, data.graph()),
        identity_leg(&apex, clf.graph()),
        data,
        clf,
    )?;
    Ok(pushout(&span)?.diagram)
}

/// The backbone edge `X -m-> F` shared by the two squares.
pub fn backbone_apex() -> LearningGraph {
    GraphSpec::new()
        .vertices(&["X", "F"])
        .edge("m", "X", "F")
        .build()
        .expect("static graph")
}

pub struct Fewshot {
    pub diagram: LearningDiagram,
    pub span: Span,
    pub left_inclusion: DiagramHom,
    pub right_inclusion: DiagramHom,
}

/// Two classifier squares glued along their common backbone.
pub fn fewshot(seed: u64) -> Result<Fewshot, DemoError> {
    let left = classifier_square(seed, 1)?;
    let right = classifier_square(seed, 2)?;
    let apex = backbone_apex();
    let span = Span::new(
        apex.clone(),
        identity_leg(&apex, left.graph()),
        identity_leg(&apex, right.graph()),
        left,
        right,
    )?;
    let po = pushout(&span)?;
    Ok(Fewshot {
        diagram: po.diagram,
        span,
        left_inclusion: po.left_inclusion,
        right_inclusion: po.right_inclusion,
    })
}

pub fn captionshape_graph() -> LearningGraph {
    GraphSpec::new()
        .named("captionshape")
        .vertices(&["N", "Z_I_x_Y", "Z_L", "Y"])
        .edge("CNN_x_Y", "N", "Z_I_x_Y")
        .edge("LSTM", "Z_I_x_Y", "Z_L")
        .edge("Label", "Z_I_x_Y", "Y")
        .edge("Prediction", "Z_L", "Y")
        .order("Label", "LSTM")
        .indexing(&["N"])
        .build()
        .expect("static graph")
}

pub const ENCODER: &str = "cnn";

/// Toy image captioning: images are 4-vectors, captions one of three
/// tokens. `CNN_x_Y` pairs an encoder of the image with the caption itself.
/// The encoder is trainable here; see [`freeze_encoder`].
pub fn captionshape(seed: u64) -> Result<LearningDiagram, DemoError> {
    let mut r = rng(seed, 3);
    let (mut images, mut captions) = (Vec::new(), Vec::new());
    for _ in 0..30 {
        let img: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let scores = [img[0] + img[1], img[2] - img[0], img[3] - img[1]];
        let k = (0..3)
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("nonempty");
        images.extend(img);
        captions.extend(one_hot(k, 3));
    }
    let ds = Dataset::new(
        "captions",
        vec![
            Column::new("image", vec![4], images)?,
            Column::new("caption", vec![3], captions)?,
        ],
        10,
    )?;
    let zi_y = Shape::Tuple(vec![Shape::vector(5), Shape::vector(3)]);
    let vd = vmap(vec![
        ("N", VertexData::data(ds)),
        ("Z_I_x_Y", VertexData::space(zi_y, MetricSpec::Infinite)),
        ("Z_L", VertexData::space(Shape::vector(6), MetricSpec::Infinite)),
        ("Y", VertexData::space(Shape::vector(3), MetricSpec::CrossEntropy)),
    ]);
    let encoder = EdgeKind::Chain(vec![
        EdgeKind::Projection(vec![ProjectionKey::Column("image".into())]),
        EdgeKind::Parameterized {
            spec: ModelSpec::Mlp {
                input: 4,
                hidden: vec![6],
                output: 5,
            },
            key: ENCODER.into(),
        },
    ]);
    let ed = vmap(vec![
        (
            "CNN_x_Y",
            EdgeModel::new(EdgeKind::Pairing(vec![
                encoder,
                EdgeKind::Projection(vec![ProjectionKey::Column("caption".into())]),
            ])),
        ),
        (
            "LSTM",
            EdgeModel::model(
                ModelSpec::Mlp {
                    input: 8,
                    hidden: vec![8],
                    output: 6,
                },
                "lstm",
            ),
        ),
        ("Label", EdgeModel::project_index(&[1])),
        (
            "Prediction",
            EdgeModel::model(ModelSpec::SoftmaxHead { input: 6, output: 3 }, "prediction"),
        ),
    ]);
    Ok(assign_semantics(captionshape_graph(), vd, ed, ParamStore::new(), seed)?)
}

/// The one-edge pattern used to pick out a single edge.
pub fn single_edge_pattern() -> LearningGraph {
    GraphSpec::new()
        .named("single_edge")
        .vertices(&["V1", "V2"])
        .edge("Edge", "V1", "V2")
        .build()
        .expect("static graph")
}

/// Freezes `CNN_x_Y` by matching the one-edge pattern onto it.
pub fn freeze_encoder(d: &LearningDiagram) -> Result<LearningDiagram, DemoError> {
    let pattern = single_edge_pattern();
    let partial = PartialAssignment::parse("Edge=CNN_x_Y", &pattern, d.graph())
        .map_err(CompositionError::UnknownLabel)?;
    let hom = find_monomorphisms(&pattern, d.graph(), &partial)
        .into_iter()
        .next()
        .ok_or_else(|| CompositionError::UnknownLabel("no CNN_x_Y edge".into()))?;
    Ok(apply_on_image(&hom, d, &EdgeAction::Freeze, &VertexAction::Keep)?)
}
