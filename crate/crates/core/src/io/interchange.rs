//! JSON documents for diagrams (`.ldd.json`) and spans (`.lds.json`).

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamStore, Tensor};
use crate::compose::{DiagramHom, Span};
use crate::graph::{GraphSpec, LearningGraph};
use crate::io::IoError;
use crate::semantics::{
    assign_semantics, Column, Dataset, EdgeKind, EdgeModel, LearningDiagram, MetricSpec, ModelSpec,
    ProjectionKey, PureFn, Shape, VertexData,
};

pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDoc {
    pub version: u32,
    pub graph: GraphSpec,
    pub spaces: BTreeMap<String, SpaceDoc>,
    pub models: BTreeMap<String, ModelDoc>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetDoc>,
    #[serde(default)]
    pub params: BTreeMap<String, BTreeMap<String, TensorDoc>>,
    /// Seeds parameters absent from `params`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub seed: u64,
}

fn is_zero(x: &u64) -> bool {
    *x == 0
}

fn is_false(x: &bool) -> bool {
    !*x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    pub metric: MetricDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricDoc {
    Infinite,
    L2,
    L1,
    SquaredL2,
    CrossEntropy,
    KlDivergence { temperature: f64 },
    AsymmetricGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub kind: KindDoc,
    #[serde(default, skip_serializing_if = "is_false")]
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KindDoc {
    Projection { keys: Vec<ProjectionKey> },
    Constant { value: TensorDoc },
    Identity,
    Relu,
    Softmax { temperature: f64 },
    Model { spec: ModelSpec, key: String },
    Pairing { parts: Vec<KindDoc> },
    Chain { parts: Vec<KindDoc> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetDoc {
    Inline {
        batch_size: usize,
        columns: Vec<ColumnDoc>,
    },
    /// A CSV file with a header row; each column gathers the listed fields.
    Csv {
        path: String,
        batch_size: usize,
        columns: Vec<CsvColumnDoc>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDoc {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvColumnDoc {
    pub name: String,
    pub shape: Vec<usize>,
    pub fields: Vec<String>,
}

fn schema(msg: impl Into<String>) -> IoError {
    IoError::Schema(msg.into())
}

fn metric_to_doc(m: &MetricSpec<f64>) -> Result<MetricDoc, IoError> {
    Ok(match m {
        MetricSpec::Infinite => MetricDoc::Infinite,
        MetricSpec::L2 => MetricDoc::L2,
        MetricSpec::L1 => MetricDoc::L1,
        MetricSpec::SquaredL2 => MetricDoc::SquaredL2,
        MetricSpec::CrossEntropy => MetricDoc::CrossEntropy,
        MetricSpec::KlDivergence { temperature } => MetricDoc::KlDivergence {
            temperature: *temperature,
        },
        MetricSpec::AsymmetricGap => MetricDoc::AsymmetricGap,
        MetricSpec::Custom(c) => {
            return Err(schema(format!(
                "custom metric `{}` cannot be written to a file",
                c.name()
            )))
        }
    })
}

fn metric_from_doc(m: &MetricDoc) -> Result<MetricSpec<f64>, IoError> {
    Ok(match m {
        MetricDoc::Infinite => MetricSpec::Infinite,
        MetricDoc::L2 => MetricSpec::L2,
        MetricDoc::L1 => MetricSpec::L1,
        MetricDoc::SquaredL2 => MetricSpec::SquaredL2,
        MetricDoc::CrossEntropy => MetricSpec::CrossEntropy,
        MetricDoc::KlDivergence { temperature } => {
            if !(*temperature > 0.0) {
                return Err(schema("KL temperature must be positive"));
            }
            MetricSpec::KlDivergence {
                temperature: *temperature,
            }
        }
        MetricDoc::AsymmetricGap => MetricSpec::AsymmetricGap,
    })
}

fn tensor_to_doc(t: &Tensor<f64>) -> TensorDoc {
    TensorDoc {
        shape: t.shape().to_vec(),
        data: t.data().to_vec(),
    }
}

fn tensor_from_doc(t: &TensorDoc) -> Result<Tensor<f64>, IoError> {
    Tensor::new(t.shape.clone(), t.data.clone()).map_err(|e| schema(e.to_string()))
}

fn kind_to_doc(k: &EdgeKind<f64>) -> KindDoc {
    match k {
        EdgeKind::Projection(keys) => KindDoc::Projection { keys: keys.clone() },
        EdgeKind::Constant(t) => KindDoc::Constant {
            value: tensor_to_doc(t),
        },
        EdgeKind::PureFn(PureFn::Identity) => KindDoc::Identity,
        EdgeKind::PureFn(PureFn::Relu) => KindDoc::Relu,
        EdgeKind::PureFn(PureFn::Softmax { temperature }) => KindDoc::Softmax {
            temperature: *temperature,
        },
        EdgeKind::Parameterized { spec, key } => KindDoc::Model {
            spec: spec.clone(),
            key: key.clone(),
        },
        EdgeKind::Pairing(parts) => KindDoc::Pairing {
            parts: parts.iter().map(kind_to_doc).collect(),
        },
        EdgeKind::Chain(parts) => KindDoc::Chain {
            parts: parts.iter().map(kind_to_doc).collect(),
        },
    }
}

fn kind_from_doc(k: &KindDoc) -> Result<EdgeKind<f64>, IoError> {
    Ok(match k {
        KindDoc::Projection { keys } => EdgeKind::Projection(keys.clone()),
        KindDoc::Constant { value } => EdgeKind::Constant(tensor_from_doc(value)?),
        KindDoc::Identity => EdgeKind::PureFn(PureFn::Identity),
        KindDoc::Relu => EdgeKind::PureFn(PureFn::Relu),
        KindDoc::Softmax { temperature } => {
            if !(*temperature > 0.0) {
                return Err(schema("softmax temperature must be positive"));
            }
            EdgeKind::PureFn(PureFn::Softmax {
                temperature: *temperature,
            })
        }
        KindDoc::Model { spec, key } => {
            if !spec.is_valid() {
                return Err(schema(format!("model `{key}` has a zero-width layer")));
            }
            EdgeKind::Parameterized {
                spec: spec.clone(),
                key: key.clone(),
            }
        }
        KindDoc::Pairing { parts } => {
            EdgeKind::Pairing(parts.iter().map(kind_from_doc).collect::<Result<_, _>>()?)
        }
        KindDoc::Chain { parts } => {
            EdgeKind::Chain(parts.iter().map(kind_from_doc).collect::<Result<_, _>>()?)
        }
    })
}

fn dataset_to_doc(d: &Dataset<f64>) -> DatasetDoc {
    DatasetDoc::Inline {
        batch_size: d.batch_size,
        columns: d
            .columns
            .iter()
            .map(|c| ColumnDoc {
                name: c.name.clone(),
                shape: c.shape.clone(),
                data: c.data.data().to_vec(),
            })
            .collect(),
    }
}

fn read_csv(path: &FsPath, columns: &[CsvColumnDoc]) -> Result<Vec<Column<f64>>, IoError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| IoError::Csv(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| IoError::Csv(format!("{}: {e}", path.display())))?
        .clone();
    let index: Vec<Vec<usize>> = columns
        .iter()
        .map(|c| {
            let width: usize = c.shape.iter().product();
            if width != c.fields.len() {
                return Err(schema(format!(
                    "column `{}` has shape {:?} but lists {} fields",
                    c.name,
                    c.shape,
                    c.fields.len()
                )));
            }
            c.fields
                .iter()
                .map(|f| {
                    header
                        .iter()
                        .position(|h| h.trim() == f)
                        .ok_or_else(|| IoError::Csv(format!("{}: no field `{f}`", path.display())))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Csv(format!("{}: {e}", path.display())))?;
        for (c, idx) in index.iter().enumerate() {
            for &i in idx {
                let cell = record.get(i).unwrap_or("").trim();
                let x: f64 = cell.parse().map_err(|_| {
                    IoError::Csv(format!(
                        "{}: record {}: `{cell}` is not a number",
                        path.display(),
                        row + 1
                    ))
                })?;
                values[c].push(x);
            }
        }
    }
    columns
        .iter()
        .zip(values)
        .map(|(c, v)| Column::new(&c.name, c.shape.clone(), v).map_err(|e| schema(e.to_string())))
        .collect()
}

fn dataset_from_doc(name: &str, d: &DatasetDoc, base: Option<&FsPath>) -> Result<Dataset<f64>, IoError> {
    let (columns, batch) = match d {
        DatasetDoc::Inline {
            batch_size,
            columns,
        } => (
            columns
                .iter()
                .map(|c| Column::new(&c.name, c.shape.clone(), c.data.clone()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| schema(e.to_string()))?,
            *batch_size,
        ),
        DatasetDoc::Csv {
            path,
            batch_size,
            columns,
        } => {
            let p = PathBuf::from(path);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            (read_csv(&p, columns)?, *batch_size)
        }
    };
    Dataset::new(name, columns, batch).map_err(|e| schema(e.to_string()))
}

pub fn params_to_doc(p: &ParamStore<f64>) -> BTreeMap<String, BTreeMap<String, TensorDoc>> {
    p.groups()
        .iter()
        .map(|(k, g)| {
            (
                k.clone(),
                g.tensors()
                    .iter()
                    .map(|(n, t)| (n.clone(), tensor_to_doc(t)))
                    .collect(),
            )
        })
        .collect()
}

pub fn params_from_doc(
    doc: &BTreeMap<String, BTreeMap<String, TensorDoc>>,
) -> Result<ParamStore<f64>, IoError> {
    let mut store = ParamStore::new();
    for (k, named) in doc {
        let tensors = named
            .iter()
            .map(|(n, t)| Ok((n.clone(), tensor_from_doc(t)?)))
            .collect::<Result<BTreeMap<_, _>, IoError>>()?;
        store.insert_group(k.clone(), ParamGroup::new(tensors));
    }
    Ok(store)
}

/// The document describing `d`. Datasets are always written inline.
pub fn save_diagram(d: &LearningDiagram<f64>) -> Result<DiagramDoc, IoError> {
    let g = d.graph();
    let mut datasets: BTreeMap<String, DatasetDoc> = BTreeMap::new();
    let mut spaces = BTreeMap::new();
    for v in g.vertex_ids() {
        let s = d.space(v);
        let dataset = match &s.dataset {
            None => None,
            Some(ds) => {
                let doc = dataset_to_doc(ds);
                let mut name = ds.name.clone();
                let mut i = 2;
                while datasets.get(&name).is_some_and(|x| *x != doc) {
                    name = format!("{}_{i}", ds.name);
                    i += 1;
                }
                datasets.insert(name.clone(), doc);
                Some(name)
            }
        };
        spaces.insert(
            g.vertex_label(v).to_string(),
            SpaceDoc {
                shape: dataset.is_none().then(|| s.shape.clone()),
                metric: metric_to_doc(&s.metric)?,
                dataset,
            },
        );
    }
    let models = g
        .edge_ids()
        .map(|e| {
            let m = d.model(e);
            (
                g.edge_label(e).to_string(),
                ModelDoc {
                    kind: kind_to_doc(&m.kind),
                    frozen: m.frozen,
                },
            )
        })
        .collect();
    Ok(DiagramDoc {
        version: VERSION,
        graph: g.to_spec(),
        spaces,
        models,
        datasets,
        params: params_to_doc(&d.params),
        seed: 0,
    })
}

/// Builds a diagram; relative CSV paths resolve against `base`.
pub fn load_diagram(doc: &DiagramDoc, base: Option<&FsPath>) -> Result<LearningDiagram<f64>, IoError> {
    if doc.version != VERSION {
        return Err(schema(format!("unsupported version {}", doc.version)));
    }
    let graph = LearningGraph::build(&doc.graph)?;
    let mut datasets = BTreeMap::new();
    for (name, d) in &doc.datasets {
        datasets.insert(name.clone(), dataset_from_doc(name, d, base)?);
    }
    let mut vdata = BTreeMap::new();
    for (label, s) in &doc.spaces {
        let dataset = match &s.dataset {
            None => None,
            Some(name) => Some(
                datasets
                    .get(name)
                    .cloned()
                    .ok_or_else(|| schema(format!("space `{label}` refers to unknown dataset `{name}`")))?,
            ),
        };
        vdata.insert(
            label.clone(),
            VertexData {
                shape: s.shape.clone(),
                metric: metric_from_doc(&s.metric)?,
                dataset,
            },
        );
    }
    let mut edata = BTreeMap::new();
    for (label, m) in &doc.models {
        edata.insert(
            label.clone(),
            EdgeModel {
                kind: kind_from_doc(&m.kind)?,
                frozen: m.frozen,
            },
        );
    }
    let params = params_from_doc(&doc.params)?;
    Ok(assign_semantics(graph, vdata, edata, params, doc.seed)?)
}

pub fn diagram_to_json(d: &LearningDiagram<f64>) -> Result<String, IoError> {
    let doc = save_diagram(d)?;
    Ok(serde_json::to_string_pretty(&doc).expect("serializable") + "\n")
}

pub fn diagram_from_json(text: &str, base: Option<&FsPath>) -> Result<LearningDiagram<f64>, IoError> {
    let doc: DiagramDoc = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    load_diagram(&doc, base)
}

pub fn read_diagram(path: &FsPath) -> Result<LearningDiagram<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
    diagram_from_json(&text, path.parent())
}

pub fn write_diagram(path: &FsPath, d: &LearningDiagram<f64>) -> Result<(), IoError> {
    std::fs::write(path, diagram_to_json(d)?).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))
}

/// Label maps of one leg: apex label to foot label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegDoc {
    #[serde(default)]
    pub vertices: BTreeMap<String, String>,
    #[serde(default)]
    pub edges: BTreeMap<String, String>,
}

impl LegDoc {
    pub fn from_hom(h: &DiagramHom) -> Self {
        let (vertices, edges) = h.to_labels();
        Self { vertices, edges }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FootDoc {
    Path(String),
    Inline(Box<DiagramDoc>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanDoc {
    pub version: u32,
    pub apex: GraphSpec,
    pub left: FootDoc,
    pub right: FootDoc,
    pub left_leg: LegDoc,
    pub right_leg: LegDoc,
}

fn load_foot(f: &FootDoc, base: Option<&FsPath>) -> Result<LearningDiagram<f64>, IoError> {
    match f {
        FootDoc::Inline(doc) => load_diagram(doc, base),
        FootDoc::Path(p) => {
            let p = PathBuf::from(p);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            read_diagram(&p)
        }
    }
}

pub fn load_span(doc: &SpanDoc, base: Option<&FsPath>) -> Result<Span<f64>, IoError> {
    if doc.version != VERSION {
        return Err(schema(format!("unsupported version {}", doc.version)));
    }
    let apex = LearningGraph::build(&doc.apex)?;
    let left = load_foot(&doc.left, base)?;
    let right = load_foot(&doc.right, base)?;
    let leg = |l: &LegDoc, foot: &LearningDiagram<f64>| {
        DiagramHom::from_labels(&apex, foot.graph(), &l.vertices, &l.edges).map_err(schema)
    };
    let left_leg = leg(&doc.left_leg, &left)?;
    let right_leg = leg(&doc.right_leg, &right)?;
    Ok(Span::new(apex, left_leg, right_leg, left, right)?)
}

/// A span document with both feet inline.
pub fn save_span(span: &Span<f64>) -> Result<SpanDoc, IoError> {
    Ok(SpanDoc {
        version: VERSION,
        apex: span.apex.to_spec(),
        left: FootDoc::Inline(Box::new(save_diagram(&span.left)?)),
        right: FootDoc::Inline(Box::new(save_diagram(&span.right)?)),
        left_leg: LegDoc::from_hom(&span.left_leg),
        right_leg: LegDoc::from_hom(&span.right_leg),
    })
}

pub fn read_span(path: &FsPath) -> Result<Span<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Io(format!("{}: {e}", path.display())))?;
    let doc: SpanDoc = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    load_span(&doc, path.parent())
}
