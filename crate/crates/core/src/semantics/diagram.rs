use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::graph::{EdgeId, LearningGraph, Path, VertexId};
use crate::scalar::Scalar;
use crate::semantics::{
    ColumnNames, Dataset, EdgeModel, MetricSpec, ModelSpec, ParamBinder, SemanticsError, Shape,
};

/// What a vertex denotes.
#[derive(Clone, Debug, PartialEq)]
pub struct Space<T: Scalar = f64> {
    pub shape: Shape,
    pub metric: MetricSpec<T>,
    /// Present exactly at indexing vertices.
    pub dataset: Option<Dataset<T>>,
}

/// Label-keyed vertex assignment. At an indexing vertex the shape may be
/// omitted; it is then the tuple of the dataset's column shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexData<T: Scalar = f64> {
    pub shape: Option<Shape>,
    pub metric: MetricSpec<T>,
    pub dataset: Option<Dataset<T>>,
}

impl<T: Scalar> VertexData<T> {
    pub fn space(shape: Shape, metric: MetricSpec<T>) -> Self {
        Self {
            shape: Some(shape),
            metric,
            dataset: None,
        }
    }

    pub fn data(dataset: Dataset<T>) -> Self {
        Self {
            shape: None,
            metric: MetricSpec::Infinite,
            dataset: Some(dataset),
        }
    }
}

/// A learning graph together with its semantics and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningDiagram<T: Scalar = f64> {
    graph: LearningGraph,
    spaces: Vec<Space<T>>,
    models: Vec<EdgeModel<T>>,
    pub params: ParamStore<T>,
}

/// Stable per-key seed, so adding a key never shifts the others' values.
fn key_seed(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

/// Fresh parameters for `spec` under `key`.
pub(crate) fn init_params<T: Scalar>(spec: &ModelSpec, key: &str, seed: u64) -> crate::autodiff::ParamGroup<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(key_seed(seed, key));
    spec.init(&mut rng)
}

fn params_fit<T: Scalar>(store: &ParamStore<T>, key: &str, spec: &ModelSpec) -> bool {
    let Some(group) = store.group(key) else {
        return false;
    };
    let expected = spec.param_shapes();
    group.tensors().len() == expected.len()
        && expected
            .iter()
            .all(|(name, shape)| group.get(name).is_some_and(|t| t.shape() == shape.as_slice()))
}

/// Binds semantics to a graph and validates the result.
///
/// Parameter keys absent from `params` are initialized from `seed`; keys
/// present must match their spec's tensor shapes.
pub fn assign_semantics<T: Scalar>(
    graph: LearningGraph,
    vertex_data: BTreeMap<String, VertexData<T>>,
    edge_data: BTreeMap<String, EdgeModel<T>>,
    params: ParamStore<T>,
    seed: u64,
) -> Result<LearningDiagram<T>, SemanticsError> {
    for label in vertex_data.keys() {
        if graph.vertex_by_label(label).is_none() {
            return Err(SemanticsError::UnknownLabel(label.clone()));
        }
    }
    for label in edge_data.keys() {
        if graph.edge_by_label(label).is_none() {
            return Err(SemanticsError::UnknownLabel(label.clone()));
        }
    }
    let mut vertex_data = vertex_data;
    let mut edge_data = edge_data;
    let mut spaces = Vec::with_capacity(graph.vertex_count());
    for v in graph.vertex_ids() {
        let label = graph.vertex_label(v);
        let data = vertex_data
            .remove(label)
            .ok_or_else(|| SemanticsError::MissingAssignment(format!("vertex `{label}`")))?;
        let shape = match (&data.dataset, graph.is_indexing(v)) {
            (Some(_), false) => return Err(SemanticsError::DatasetOnNonIndexing(label.into())),
            (None, true) => return Err(SemanticsError::NoDatasetOnIndexing(label.into())),
            (Some(ds), true) => {
                let row = ds.row_shape();
                if let Some(s) = &data.shape {
                    if *s != row {
                        return Err(SemanticsError::ShapeMismatch(format!(
                            "vertex `{label}` declares {s} but its dataset rows are {row}"
                        )));
                    }
                }
                row
            }
            (None, false) => data.shape.clone().ok_or_else(|| {
                SemanticsError::MissingAssignment(format!("shape of vertex `{label}`"))
            })?,
        };
        if !shape.is_valid() {
            return Err(SemanticsError::ShapeMismatch(format!(
                "vertex `{label}` has degenerate shape {shape}"
            )));
        }
        spaces.push(Space {
            shape,
            metric: data.metric,
            dataset: data.dataset,
        });
    }
    let mut models = Vec::with_capacity(graph.edge_count());
    for e in graph.edge_ids() {
        let label = graph.edge_label(e);
        let m = edge_data
            .remove(label)
            .ok_or_else(|| SemanticsError::MissingAssignment(format!("edge `{label}`")))?;
        models.push(m);
    }
    let mut d = LearningDiagram {
        graph,
        spaces,
        models,
        params,
    };
    d.validate()?;
    for (key, spec) in d.param_specs()? {
        if !d.params.contains(&key) {
            d.params.insert_group(key.clone(), init_params(&spec, &key, seed));
        }
    }
    d.check_params()?;
    Ok(d)
}

impl<T: Scalar> LearningDiagram<T> {
    pub fn graph(&self) -> &LearningGraph {
        &self.graph
    }

    pub fn space(&self, v: VertexId) -> &Space<T> {
        &self.spaces[v.0]
    }

    pub fn model(&self, e: EdgeId) -> &EdgeModel<T> {
        &self.models[e.0]
    }

    pub fn spaces(&self) -> &[Space<T>] {
        &self.spaces
    }

    pub fn models(&self) -> &[EdgeModel<T>] {
        &self.models
    }

    pub fn metric_finite(&self, v: VertexId) -> bool {
        self.spaces[v.0].metric.is_finite()
    }

    pub(crate) fn column_names(&self, v: VertexId) -> Option<Vec<String>> {
        self.spaces[v.0].dataset.as_ref().map(Dataset::column_names)
    }

    /// Every parameter key with its spec; fails on conflicting specs.
    pub fn param_specs(&self) -> Result<BTreeMap<String, ModelSpec>, SemanticsError> {
        let mut out: BTreeMap<String, ModelSpec> = BTreeMap::new();
        for m in &self.models {
            for (key, spec) in m.param_specs() {
                match out.get(&key) {
                    Some(s) if *s != spec => return Err(SemanticsError::SharedKeySpecMismatch(key)),
                    Some(_) => {}
                    None => {
                        out.insert(key, spec);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Shape compatibility along every edge and key/spec consistency.
    pub fn validate(&self) -> Result<(), SemanticsError> {
        for e in self.graph.edge_ids() {
            let (s, t) = (self.graph.src(e), self.graph.tgt(e));
            let names = self.column_names(s);
            let out = self.models[e.0]
                .kind
                .output_shape(&self.spaces[s.0].shape, names.as_deref())
                .map_err(|err| match err {
                    SemanticsError::ShapeMismatch(msg) => SemanticsError::ShapeMismatch(format!(
                        "edge `{}`: {msg}",
                        self.graph.edge_label(e)
                    )),
                    other => other,
                })?;
            let expected = &self.spaces[t.0].shape;
            if out.flat_len() != expected.flat_len() || !shapes_agree(&out, expected) {
                return Err(SemanticsError::ShapeMismatch(format!(
                    "edge `{}` produces {out} but `{}` has shape {expected}",
                    self.graph.edge_label(e),
                    self.graph.vertex_label(t)
                )));
            }
        }
        self.param_specs()?;
        Ok(())
    }

    fn check_params(&self) -> Result<(), SemanticsError> {
        for (key, spec) in self.param_specs()? {
            if !params_fit(&self.params, &key, &spec) {
                return Err(SemanticsError::MissingParams(key));
            }
        }
        Ok(())
    }

    /// Replaces an edge's model and revalidates.
    pub fn set_model(&mut self, e: EdgeId, model: EdgeModel<T>, seed: u64) -> Result<(), SemanticsError> {
        let old = std::mem::replace(&mut self.models[e.0], model);
        if let Err(err) = self.validate() {
            self.models[e.0] = old;
            return Err(err);
        }
        for (key, spec) in self.param_specs()? {
            if !self.params.contains(&key) {
                self.params.insert_group(key.clone(), init_params(&spec, &key, seed));
            }
        }
        self.prune_params();
        self.check_params()
    }

    /// Replaces a vertex's space and revalidates.
    pub fn set_space(&mut self, v: VertexId, space: Space<T>) -> Result<(), SemanticsError> {
        match (&space.dataset, self.graph.is_indexing(v)) {
            (Some(_), false) => {
                return Err(SemanticsError::DatasetOnNonIndexing(
                    self.graph.vertex_label(v).into(),
                ))
            }
            (None, true) => {
                return Err(SemanticsError::NoDatasetOnIndexing(
                    self.graph.vertex_label(v).into(),
                ))
            }
            _ => {}
        }
        let old = std::mem::replace(&mut self.spaces[v.0], space);
        if let Err(err) = self.validate() {
            self.spaces[v.0] = old;
            return Err(err);
        }
        Ok(())
    }

    pub fn set_frozen(&mut self, e: EdgeId, frozen: bool) {
        self.models[e.0].frozen = frozen;
    }

    /// Drops parameter groups no edge refers to.
    pub fn prune_params(&mut self) {
        let used: Vec<String> = self
            .models
            .iter()
            .flat_map(|m| m.param_keys())
            .collect();
        let stale: Vec<String> = self
            .params
            .keys()
            .filter(|k| !used.iter().any(|u| u == k))
            .map(str::to_string)
            .collect();
        for k in stale {
            self.params.remove(&k);
        }
    }

    /// Records `path` applied to `input` (`[rows, flat]`), reusing cached
    /// prefixes so shared path prefixes run once per tape.
    pub(crate) fn forward_path(
        &self,
        tape: &mut Tape<T>,
        binder: &mut ParamBinder,
        cache: &mut BTreeMap<Vec<EdgeId>, Var>,
        path: &Path,
        input: Var,
    ) -> Result<Var, SemanticsError> {
        let mut h = input;
        let mut start = 0;
        for k in (1..=path.edges.len()).rev() {
            if let Some(v) = cache.get(&path.edges[..k]) {
                h = *v;
                start = k;
                break;
            }
        }
        for k in start..path.edges.len() {
            let e = path.edges[k];
            let s = self.graph.src(e);
            let names = self.column_names(s);
            let names: ColumnNames<'_> = names.as_deref();
            h = self.models[e.0].kind.forward(
                tape,
                binder,
                &self.params,
                h,
                &self.spaces[s.0].shape,
                names,
            )?;
            cache.insert(path.edges[..=k].to_vec(), h);
        }
        Ok(h)
    }
}

/// Dims shapes compare by flat length so that `(2,2)` and `(4)` interoperate
/// with models that flatten; tuples must match component-wise.
fn shapes_agree(a: &Shape, b: &Shape) -> bool {
    match (a, b) {
        (Shape::Dims(x), Shape::Dims(y)) => x.iter().product::<usize>() == y.iter().product::<usize>(),
        (Shape::Tuple(x), Shape::Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| shapes_agree(p, q))
        }
        _ => false,
    }
}

/// Applies `path` to a batch `[rows, flat]` of points of its source space.
pub fn eval_path_rows<T: Scalar>(
    diagram: &LearningDiagram<T>,
    path: &Path,
    rows: &Tensor<T>,
) -> Result<Tensor<T>, SemanticsError> {
    let width = diagram.space(path.src).shape.flat_len();
    if rows.shape().len() != 2 || rows.cols() != width {
        return Err(SemanticsError::ShapeMismatch(format!(
            "input {:?} does not hold points of width {width}",
            rows.shape()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(rows.clone());
    let y = diagram.forward_path(
        &mut tape,
        &mut ParamBinder::new(),
        &mut BTreeMap::new(),
        path,
        x,
    )?;
    Ok(tape.value(y).clone())
}

/// Applies `path` to one point of its source space; the result is flat.
pub fn eval_path<T: Scalar>(
    diagram: &LearningDiagram<T>,
    path: &Path,
    sample: &Tensor<T>,
) -> Result<Tensor<T>, SemanticsError> {
    let row = Tensor::matrix(1, sample.len(), sample.data().to_vec());
    let out = eval_path_rows(diagram, path, &row)?;
    Ok(Tensor::vector(out.into_data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamGroup;
    use crate::graph::GraphSpec;
    use crate::semantics::Column;

    fn regression(w: [f64; 4], b: [f64; 2]) -> LearningDiagram {
        let g = GraphSpec::new()
            .vertices(&["l", "P", "R"])
            .edge("Xtheta", "l", "P")
            .edge("f", "P", "R")
            .edge("Y", "l", "R")
            .indexing(&["l"])
            .build()
            .unwrap();
        let x = Column::new("x", vec![2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let y = Column::new("y", vec![2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let ds = Dataset::new("d", vec![x, y], 2).unwrap();
        let mut vd = BTreeMap::new();
        vd.insert("l".to_string(), VertexData::data(ds));
        vd.insert("P".to_string(), VertexData::space(Shape::vector(2), MetricSpec::Infinite));
        vd.insert("R".to_string(), VertexData::space(Shape::vector(2), MetricSpec::SquaredL2));
        let mut ed = BTreeMap::new();
        ed.insert("Xtheta".to_string(), EdgeModel::projection(&["x"]));
        ed.insert(
            "f".to_string(),
            EdgeModel::model(ModelSpec::Affine { input: 2, output: 2 }, "f"),
        );
        ed.insert("Y".to_string(), EdgeModel::projection(&["y"]));
        let mut params = ParamStore::new();
        let mut t = BTreeMap::new();
        t.insert("w0".to_string(), Tensor::matrix(2, 2, w.to_vec()));
        t.insert("b0".to_string(), Tensor::vector(b.to_vec()));
        params.insert_group("f", ParamGroup::new(t));
        assign_semantics(g, vd, ed, params, 0).unwrap()
    }

    #[test]
    fn projection_path_returns_label() {
        let d = regression([1.0, 0.0, 0.0, 1.0], [0.0, 0.0]);
        let g = d.graph();
        let p = Path::single(g, g.edge_by_label("Y").unwrap());
        let out = eval_path(&d, &p, &Tensor::vector(vec![1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0]);
    }

    #[test]
    fn affine_path_by_hand() {
        // x = (1, 2), W = [[1, 2], [3, 4]] (row = input), b = (0.5, -1):
        // xW + b = (1 + 6 + 0.5, 2 + 8 - 1) = (7.5, 9).
        let d = regression([1.0, 2.0, 3.0, 4.0], [0.5, -1.0]);
        let g = d.graph();
        let p = Path::from_edges(
            g,
            vec![g.edge_by_label("Xtheta").unwrap(), g.edge_by_label("f").unwrap()],
        )
        .unwrap();
        let out = eval_path(&d, &p, &Tensor::vector(vec![1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(out.data(), &[7.5, 9.0]);
    }

    #[test]
    fn empty_path_is_identity() {
        let d = regression([1.0, 0.0, 0.0, 1.0], [0.0, 0.0]);
        let l = d.graph().vertex_by_label("l").unwrap();
        let s = Tensor::vector(vec![1.0, 2.0, 0.0, 1.0]);
        assert_eq!(eval_path(&d, &Path::identity(l), &s).unwrap(), s);
    }

    #[test]
    fn frozen_flag_keeps_forward() {
        let mut d = regression([1.0, 2.0, 3.0, 4.0], [0.5, -1.0]);
        let g = d.graph().clone();
        let f = g.edge_by_label("f").unwrap();
        let p = Path::from_edges(&g, vec![g.edge_by_label("Xtheta").unwrap(), f]).unwrap();
        let s = Tensor::vector(vec![0.3, -0.7, 0.0, 1.0]);
        let before = eval_path(&d, &p, &s).unwrap();
        d.set_frozen(f, true);
        assert_eq!(eval_path(&d, &p, &s).unwrap(), before);
    }

    #[test]
    fn output_shape_mismatch() {
        let d = regression([1.0, 0.0, 0.0, 1.0], [0.0, 0.0]);
        let mut d2 = d.clone();
        let f = d.graph().edge_by_label("f").unwrap();
        let bad = EdgeModel::model(ModelSpec::Affine { input: 2, output: 3 }, "g");
        assert!(matches!(d2.set_model(f, bad, 0), Err(SemanticsError::ShapeMismatch(_))));
        assert_eq!(d2, d);
    }

    #[test]
    fn shared_key_spec_mismatch() {
        let g = GraphSpec::new()
            .vertices(&["N", "X", "F1", "F2"])
            .edge("x", "N", "X")
            .edge("m1", "X", "F1")
            .edge("m2", "X", "F2")
            .indexing(&["N"])
            .build()
            .unwrap();
        let ds = Dataset::new("d", vec![Column::new("x", vec![2], vec![1.0, 2.0]).unwrap()], 1).unwrap();
        let mut vd = BTreeMap::new();
        vd.insert("N".to_string(), VertexData::data(ds));
        vd.insert("X".to_string(), VertexData::space(Shape::vector(2), MetricSpec::Infinite));
        vd.insert("F1".to_string(), VertexData::space(Shape::vector(3), MetricSpec::Infinite));
        vd.insert("F2".to_string(), VertexData::space(Shape::vector(3), MetricSpec::Infinite));
        let mut ed = BTreeMap::new();
        ed.insert("x".to_string(), EdgeModel::projection(&["x"]));
        ed.insert(
            "m1".to_string(),
            EdgeModel::model(ModelSpec::Affine { input: 2, output: 3 }, "m"),
        );
        ed.insert(
            "m2".to_string(),
            EdgeModel::model(ModelSpec::Mlp { input: 2, hidden: vec![4], output: 3 }, "m"),
        );
        let r = assign_semantics::<f64>(g, vd, ed, ParamStore::new(), 0);
        assert_eq!(r.unwrap_err(), SemanticsError::SharedKeySpecMismatch("m".into()));
    }
}
