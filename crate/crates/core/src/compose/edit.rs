use crate::compose::{check_hom, CompositionError, DiagramHom};
use crate::scalar::Scalar;
use crate::semantics::{Dataset, EdgeKind, EdgeModel, LearningDiagram, MetricSpec, ModelSpec, Space};

/// What to do to every image edge.
#[derive(Clone, Debug, PartialEq)]
pub enum EdgeAction {
    Keep,
    Freeze,
    Unfreeze,
    /// Replace the edge's model by a freshly initialized `spec` under a new key.
    SwapModel { spec: ModelSpec, seed: u64 },
}

/// What to do to every image vertex.
#[derive(Clone, Debug, PartialEq)]
pub enum VertexAction<T: Scalar = f64> {
    Keep,
    ReassignDataset(Dataset<T>),
    ChangeMetric(MetricSpec<T>),
}

fn count_models<T: Scalar>(kind: &EdgeKind<T>) -> usize {
    match kind {
        EdgeKind::Parameterized { .. } => 1,
        EdgeKind::Pairing(parts) | EdgeKind::Chain(parts) => parts.iter().map(count_models).sum(),
        _ => 0,
    }
}

fn replace_model<T: Scalar>(kind: &mut EdgeKind<T>, spec: &ModelSpec, key: &str) {
    match kind {
        EdgeKind::Parameterized { .. } => {
            *kind = EdgeKind::Parameterized {
                spec: spec.clone(),
                key: key.to_string(),
            }
        }
        EdgeKind::Pairing(parts) | EdgeKind::Chain(parts) => {
            for p in parts {
                replace_model(p, spec, key);
            }
        }
        _ => {}
    }
}

fn fresh_key<T: Scalar>(d: &LearningDiagram<T>, base: &str) -> String {
    let taken = |k: &str| {
        d.params.contains(k) || d.models().iter().any(|m| m.param_keys().contains(k))
    };
    if !taken(base) {
        return base.to_string();
    }
    (2..)
        .map(|i| format!("{base}#{i}"))
        .find(|k| !taken(k))
        .expect("unbounded")
}

/// Applies the actions to exactly the image of `hom` in `diagram`.
pub fn apply_on_image<T: Scalar>(
    hom: &DiagramHom,
    diagram: &LearningDiagram<T>,
    edge_action: &EdgeAction,
    vertex_action: &VertexAction<T>,
) -> Result<LearningDiagram<T>, CompositionError> {
    if hom.target != *diagram.graph() {
        return Err(CompositionError::HomTargetMismatch);
    }
    let violations = check_hom(hom);
    if !violations.is_empty() {
        return Err(CompositionError::NotAHom(
            violations.iter().map(|v| v.describe(hom)).collect(),
        ));
    }
    let mut out = diagram.clone();
    let mut edges = hom.emap.clone();
    edges.sort();
    edges.dedup();
    for e in edges {
        match edge_action {
            EdgeAction::Keep => {}
            EdgeAction::Freeze => out.set_frozen(e, true),
            EdgeAction::Unfreeze => out.set_frozen(e, false),
            EdgeAction::SwapModel { spec, seed } => {
                let label = out.graph().edge_label(e).to_string();
                let mut model = out.model(e).clone();
                let key = fresh_key(&out, &format!("{label}:{}", spec.tag()));
                match count_models(&model.kind) {
                    0 => {
                        model = EdgeModel {
                            kind: EdgeKind::Parameterized {
                                spec: spec.clone(),
                                key,
                            },
                            frozen: model.frozen,
                        }
                    }
                    1 => replace_model(&mut model.kind, spec, &key),
                    _ => {
                        return Err(CompositionError::ActionShapeMismatch(format!(
                            "edge `{label}` holds several models; the swap is ambiguous"
                        )))
                    }
                }
                out.set_model(e, model, *seed)
                    .map_err(|err| CompositionError::ActionShapeMismatch(err.to_string()))?;
            }
        }
    }
    let mut vertices = hom.vmap.clone();
    vertices.sort();
    vertices.dedup();
    for v in vertices {
        let current = out.space(v).clone();
        let next = match vertex_action {
            VertexAction::Keep => continue,
            VertexAction::ChangeMetric(m) => Space {
                metric: m.clone(),
                ..current
            },
            VertexAction::ReassignDataset(ds) => Space {
                shape: ds.row_shape(),
                dataset: Some(ds.clone()),
                ..current
            },
        };
        out.set_space(v, next)
            .map_err(|err| CompositionError::ActionShapeMismatch(err.to_string()))?;
    }
    Ok(out)
}
