//! Maps attached to edges.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGroup, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::semantics::{SemanticsError, Shape};

/// Architecture of a parameterized edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Affine { input: usize, output: usize },
    /// ReLU between layers, linear output.
    Mlp { input: usize, hidden: Vec<usize>, output: usize },
    /// Affine followed by a softmax.
    SoftmaxHead { input: usize, output: usize },
}

impl ModelSpec {
    pub fn input(&self) -> usize {
        match self {
            ModelSpec::Affine { input, .. }
            | ModelSpec::Mlp { input, .. }
            | ModelSpec::SoftmaxHead { input, .. } => *input,
        }
    }

    pub fn output(&self) -> usize {
        match self {
            ModelSpec::Affine { output, .. }
            | ModelSpec::Mlp { output, .. }
            | ModelSpec::SoftmaxHead { output, .. } => *output,
        }
    }

    /// `(fan_in, fan_out)` of every layer.
    fn layers(&self) -> Vec<(usize, usize)> {
        match self {
            ModelSpec::Affine { input, output } | ModelSpec::SoftmaxHead { input, output } => {
                vec![(*input, *output)]
            }
            ModelSpec::Mlp {
                input,
                hidden,
                output,
            } => {
                let mut dims = vec![*input];
                dims.extend(hidden);
                dims.push(*output);
                dims.windows(2).map(|w| (w[0], w[1])).collect()
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        self.layers().iter().all(|&(a, b)| a > 0 && b > 0)
    }

    /// Tensor names and shapes, layer by layer.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, (fin, fout)) in self.layers().into_iter().enumerate() {
            out.push((format!("w{i}"), vec![fin, fout]));
            out.push((format!("b{i}"), vec![fout]));
        }
        out
    }

    /// Weights uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init<T: Scalar>(&self, rng: &mut impl Rng) -> ParamGroup<T> {
        let mut tensors = BTreeMap::new();
        for (i, (fin, fout)) in self.layers().into_iter().enumerate() {
            let bound = 1.0 / (fin as f64).sqrt();
            let w: Vec<T> = (0..fin * fout)
                .map(|_| T::lit(rng.gen_range(-bound..bound)))
                .collect();
            tensors.insert(format!("w{i}"), Tensor::matrix(fin, fout, w));
            tensors.insert(format!("b{i}"), Tensor::zeros(vec![fout]));
        }
        ParamGroup::new(tensors)
    }

    /// Parses `affine(4,3)`, `mlp(4,8,3)` or `softmax_head(4,3)`.
    pub fn parse(text: &str) -> Option<ModelSpec> {
        let text = text.trim();
        let open = text.find('(')?;
        let name = text[..open].trim();
        let args = text[open + 1..].strip_suffix(')')?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|s| s.trim().parse().ok())
            .collect::<Option<_>>()?;
        let spec = match (name, nums.as_slice()) {
            ("affine", [i, o]) => ModelSpec::Affine {
                input: *i,
                output: *o,
            },
            ("softmax_head", [i, o]) => ModelSpec::SoftmaxHead {
                input: *i,
                output: *o,
            },
            ("mlp", [i, hidden @ .., o]) if !hidden.is_empty() => ModelSpec::Mlp {
                input: *i,
                hidden: hidden.to_vec(),
                output: *o,
            },
            _ => return None,
        };
        spec.is_valid().then_some(spec)
    }

    /// Short text form; inverse of [`ModelSpec::parse`].
    pub fn tag(&self) -> String {
        match self {
            ModelSpec::Affine { input, output } => format!("affine({input},{output})"),
            ModelSpec::SoftmaxHead { input, output } => format!("softmax_head({input},{output})"),
            ModelSpec::Mlp {
                input,
                hidden,
                output,
            } => {
                let h: Vec<String> = hidden.iter().map(|x| x.to_string()).collect();
                format!("mlp({input},{},{output})", h.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectionKey {
    Index(usize),
    Column(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PureFn<T: Scalar = f64> {
    Identity,
    Relu,
    Softmax { temperature: T },
}

#[derive(Clone, Debug, PartialEq)]
pub enum EdgeKind<T: Scalar = f64> {
    /// Selects tuple components (by index, or by column name at a dataset).
    Projection(Vec<ProjectionKey>),
    Constant(Tensor<T>),
    PureFn(PureFn<T>),
    Parameterized { spec: ModelSpec, key: String },
    /// `<f, g, ...>`: every component sees the input; outputs form a tuple.
    Pairing(Vec<EdgeKind<T>>),
    /// Left-to-right composition inside one edge.
    Chain(Vec<EdgeKind<T>>),
}

/// Semantics of one edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeModel<T: Scalar = f64> {
    pub kind: EdgeKind<T>,
    /// Frozen edges still run forward but their parameters are not trained.
    pub frozen: bool,
}

impl<T: Scalar> EdgeModel<T> {
    pub fn new(kind: EdgeKind<T>) -> Self {
        Self {
            kind,
            frozen: false,
        }
    }

    pub fn frozen(kind: EdgeKind<T>) -> Self {
        Self { kind, frozen: true }
    }

    pub fn projection(columns: &[&str]) -> Self {
        Self::new(EdgeKind::Projection(
            columns
                .iter()
                .map(|c| ProjectionKey::Column(c.to_string()))
                .collect(),
        ))
    }

    pub fn project_index(indices: &[usize]) -> Self {
        Self::new(EdgeKind::Projection(
            indices.iter().map(|&i| ProjectionKey::Index(i)).collect(),
        ))
    }

    pub fn model(spec: ModelSpec, key: &str) -> Self {
        Self::new(EdgeKind::Parameterized {
            spec,
            key: key.to_string(),
        })
    }

    pub fn pure(f: PureFn<T>) -> Self {
        Self::new(EdgeKind::PureFn(f))
    }

    /// Parameter keys with their specs, in first-use order.
    pub fn param_specs(&self) -> Vec<(String, ModelSpec)> {
        let mut out = Vec::new();
        self.kind.collect_params(&mut out);
        out
    }

    pub fn param_keys(&self) -> BTreeSet<String> {
        self.param_specs().into_iter().map(|(k, _)| k).collect()
    }
}

/// Where a projection can look up column names.
pub(crate) type ColumnNames<'a> = Option<&'a [String]>;

fn resolve_projection(
    keys: &[ProjectionKey],
    input: &Shape,
    names: ColumnNames<'_>,
) -> Result<Vec<(usize, Shape)>, SemanticsError> {
    keys.iter()
        .map(|k| {
            let idx = match k {
                ProjectionKey::Index(i) => *i,
                ProjectionKey::Column(c) => names
                    .and_then(|n| n.iter().position(|x| x == c))
                    .ok_or_else(|| {
                        SemanticsError::ShapeMismatch(format!("no column `{c}` to project onto"))
                    })?,
            };
            input
                .component(idx)
                .map(|(off, s)| (off, s.clone()))
                .ok_or_else(|| {
                    SemanticsError::ShapeMismatch(format!(
                        "projection index {idx} out of range for {input}"
                    ))
                })
        })
        .collect()
}

impl<T: Scalar> EdgeKind<T> {
    fn collect_params(&self, out: &mut Vec<(String, ModelSpec)>) {
        match self {
            EdgeKind::Parameterized { spec, key } => {
                if !out.iter().any(|(k, _)| k == key) {
                    out.push((key.clone(), spec.clone()));
                }
            }
            EdgeKind::Pairing(parts) | EdgeKind::Chain(parts) => {
                for p in parts {
                    p.collect_params(out);
                }
            }
            _ => {}
        }
    }

    /// Shape produced from an input of shape `input`.
    pub fn output_shape(&self, input: &Shape, names: ColumnNames<'_>) -> Result<Shape, SemanticsError> {
        match self {
            EdgeKind::Projection(keys) => {
                if keys.is_empty() {
                    return Err(SemanticsError::ShapeMismatch("empty projection".into()));
                }
                let mut parts: Vec<Shape> = resolve_projection(keys, input, names)?
                    .into_iter()
                    .map(|(_, s)| s)
                    .collect();
                Ok(if parts.len() == 1 {
                    parts.remove(0)
                } else {
                    Shape::Tuple(parts)
                })
            }
            EdgeKind::Constant(t) => Ok(Shape::Dims(t.shape().to_vec())),
            EdgeKind::PureFn(_) => Ok(input.clone()),
            EdgeKind::Parameterized { spec, key } => {
                if input.flat_len() != spec.input() {
                    return Err(SemanticsError::ShapeMismatch(format!(
                        "model `{key}` takes {} inputs, space {input} has {}",
                        spec.input(),
                        input.flat_len()
                    )));
                }
                Ok(Shape::vector(spec.output()))
            }
            EdgeKind::Pairing(parts) => {
                if parts.is_empty() {
                    return Err(SemanticsError::ShapeMismatch("empty pairing".into()));
                }
                Ok(Shape::Tuple(
                    parts
                        .iter()
                        .map(|p| p.output_shape(input, names))
                        .collect::<Result<_, _>>()?,
                ))
            }
            EdgeKind::Chain(parts) => {
                let mut shape = input.clone();
                let mut names = names;
                for p in parts {
                    shape = p.output_shape(&shape, names)?;
                    names = None;
                }
                Ok(shape)
            }
        }
    }

    /// Records the edge's map on `input` (`[rows, flat]`).
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        binder: &mut ParamBinder,
        store: &ParamStore<T>,
        input: Var,
        in_shape: &Shape,
        names: ColumnNames<'_>,
    ) -> Result<Var, SemanticsError> {
        match self {
            EdgeKind::Projection(keys) => {
                let parts = resolve_projection(keys, in_shape, names)?;
                let vars = parts
                    .iter()
                    .map(|(off, s)| tape.slice(input, *off, s.flat_len()))
                    .collect::<Result<Vec<_>, _>>()?;
                if vars.len() == 1 {
                    Ok(vars[0])
                } else {
                    Ok(tape.concat(&vars)?)
                }
            }
            EdgeKind::Constant(t) => {
                let rows = tape.value(input).rows();
                let mut data = Vec::with_capacity(rows * t.len());
                for _ in 0..rows {
                    data.extend_from_slice(t.data());
                }
                Ok(tape.leaf(Tensor::matrix(rows, t.len(), data)))
            }
            EdgeKind::PureFn(f) => Ok(match f {
                PureFn::Identity => input,
                PureFn::Relu => tape.relu(input),
                PureFn::Softmax { temperature } => tape.softmax(input, *temperature)?,
            }),
            EdgeKind::Parameterized { spec, key } => {
                let layers = spec.layers().len();
                let mut h = input;
                for i in 0..layers {
                    let w = binder.bind(tape, store, key, &format!("w{i}"))?;
                    let b = binder.bind(tape, store, key, &format!("b{i}"))?;
                    let z = tape.matmul(h, w)?;
                    h = tape.add_row(z, b)?;
                    if i + 1 < layers {
                        h = tape.relu(h);
                    }
                }
                if let ModelSpec::SoftmaxHead { .. } = spec {
                    h = tape.softmax(h, T::one())?;
                }
                Ok(h)
            }
            EdgeKind::Pairing(parts) => {
                let vars = parts
                    .iter()
                    .map(|p| p.forward(tape, binder, store, input, in_shape, names))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(tape.concat(&vars)?)
            }
            EdgeKind::Chain(parts) => {
                let mut h = input;
                let mut shape = in_shape.clone();
                let mut names = names;
                for p in parts {
                    h = p.forward(tape, binder, store, h, &shape, names)?;
                    shape = p.output_shape(&shape, names)?;
                    names = None;
                }
                Ok(h)
            }
        }
    }
}

/// Binds parameter tensors to tape leaves, once per `(key, name)`, so that
/// every use of a shared key accumulates into the same gradient.
#[derive(Debug, Default)]
pub struct ParamBinder {
    vars: BTreeMap<(String, String), Var>,
}

impl ParamBinder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind<T: Scalar>(
        &mut self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        key: &str,
        name: &str,
    ) -> Result<Var, SemanticsError> {
        let k = (key.to_string(), name.to_string());
        if let Some(v) = self.vars.get(&k) {
            return Ok(*v);
        }
        let value = store.tensor(key, name)?.clone();
        let v = tape.leaf(value);
        self.vars.insert(k, v);
        Ok(v)
    }

    pub fn bound(&self) -> impl Iterator<Item = (&str, &str, Var)> {
        self.vars
            .iter()
            .map(|((k, n), v)| (k.as_str(), n.as_str(), *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_text_round_trip() {
        for text in ["affine(4,3)", "mlp(4,8,3)", "mlp(2,5,5,1)", "softmax_head(6,3)"] {
            assert_eq!(ModelSpec::parse(text).unwrap().tag(), text);
        }
        assert!(ModelSpec::parse("mlp(4,3)").is_none());
        assert!(ModelSpec::parse("affine(0,3)").is_none());
        assert!(ModelSpec::parse("conv(1,2)").is_none());
    }

    #[test]
    fn projection_shapes() {
        let input = Shape::Tuple(vec![Shape::vector(4), Shape::vector(3)]);
        let names = vec!["image".to_string(), "caption".to_string()];
        let k = EdgeKind::<f64>::Projection(vec![ProjectionKey::Column("caption".into())]);
        assert_eq!(k.output_shape(&input, Some(&names)).unwrap(), Shape::vector(3));
        let k = EdgeKind::<f64>::Projection(vec![ProjectionKey::Index(2)]);
        assert!(k.output_shape(&input, None).is_err());
    }

    #[test]
    fn model_input_mismatch() {
        let k = EdgeKind::<f64>::Parameterized {
            spec: ModelSpec::Affine {
                input: 4,
                output: 2,
            },
            key: "m".into(),
        };
        assert!(k.output_shape(&Shape::vector(4), None).is_ok());
        assert!(k.output_shape(&Shape::vector(3), None).is_err());
    }
}
