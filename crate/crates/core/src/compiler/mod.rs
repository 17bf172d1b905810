//! Compiles a diagram into a sum of loss terms, one per admissible parallel
//! pair, and evaluates, differentiates and trains it.

mod contractivity;

pub use contractivity::{
    contractivity_check, random_trial, run_trials, ContractivityError, ContractivityOutcome,
    FiniteLawvere, QuotientTrial, TrialSummary,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{optimizer_step, AutodiffError, Optimizer, ParamGrads, Tape, Var};
use crate::graph::{EdgeId, VertexId};
use crate::paths::{parallel_pairs, PairWarning, ParallelPair};
use crate::scalar::Scalar;
use crate::semantics::{LearningDiagram, MetricSpec, ParamBinder, SemanticsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("no trainable parameters")]
    NoTrainableParams,
    #[error("row {row} out of range for dataset at vertex {vertex}")]
    RowOutOfRange { vertex: String, row: usize },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// One `l(f, g)` summand.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerm<T: Scalar = f64> {
    pub pair: ParallelPair,
    /// Name of the dataset at the pair's source.
    pub dataset: String,
    pub metric: MetricSpec<T>,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompileWarning {
    Incomparable(PairWarning),
    /// The diagram compiles to the constant 0.
    NoLossTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompiledLoss<T: Scalar = f64> {
    pub terms: Vec<LossTerm<T>>,
    /// Keys of non-frozen parameterized edges on some term's paths.
    pub param_keys: BTreeSet<String>,
    pub warnings: Vec<CompileWarning>,
}

impl<T: Scalar> CompiledLoss<T> {
    /// Edges appearing in some term, ascending.
    pub fn involved_edges(&self) -> BTreeSet<EdgeId> {
        self.terms
            .iter()
            .flat_map(|t| t.pair.first.edges.iter().chain(&t.pair.second.edges))
            .copied()
            .collect()
    }

    pub fn set_weight(&mut self, term: usize, weight: T) {
        self.terms[term].weight = weight;
    }
}

pub fn compile<T: Scalar>(diagram: &LearningDiagram<T>) -> Result<CompiledLoss<T>, CompileError> {
    diagram.validate()?;
    let graph = diagram.graph();
    let set = parallel_pairs(graph, |v| diagram.metric_finite(v));
    let mut terms = Vec::with_capacity(set.pairs.len());
    for pair in set.pairs {
        let space = diagram.space(pair.src);
        let dataset = space
            .dataset
            .as_ref()
            .map(|d| d.name.clone())
            .ok_or_else(|| SemanticsError::NoDatasetOnIndexing(graph.vertex_label(pair.src).into()))?;
        terms.push(LossTerm {
            metric: diagram.space(pair.tgt).metric.clone(),
            pair,
            dataset,
            weight: T::one(),
        });
    }
    let mut param_keys = BTreeSet::new();
    for t in &terms {
        for e in t.pair.first.edges.iter().chain(&t.pair.second.edges) {
            let m = diagram.model(*e);
            if !m.frozen {
                param_keys.extend(m.param_keys());
            }
        }
    }
    let mut warnings: Vec<CompileWarning> =
        set.warnings.into_iter().map(CompileWarning::Incomparable).collect();
    if terms.is_empty() {
        warnings.push(CompileWarning::NoLossTerms);
    }
    Ok(CompiledLoss {
        terms,
        param_keys,
        warnings,
    })
}

/// Which rows of each dataset a pass sees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalMode {
    FullBatch,
    /// One batch of size `b` per indexing vertex, drawn from an independent
    /// seeded shuffle per epoch; incomplete trailing batches are dropped.
    MiniBatch {
        seed: u64,
        step: u64,
        scale_to_full: bool,
    },
    /// Explicit rows per indexing vertex; vertices not listed use all rows.
    Rows(BTreeMap<VertexId, Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T: Scalar = f64> {
    pub total: T,
    pub per_term: Vec<T>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rows of a dataset of size `n` with batch size `b` used at `step`. A
/// batch larger than the dataset is the whole dataset.
pub fn minibatch_rows(n: usize, b: usize, seed: u64, vertex: VertexId, step: u64) -> Vec<usize> {
    let b = b.clamp(1, n.max(1)).min(n);
    if b == 0 {
        return Vec::new();
    }
    let per_epoch = (n / b).max(1) as u64;
    let epoch = step / per_epoch;
    let k = (step % per_epoch) as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(seed, vertex.0 as u64), epoch));
    perm.shuffle(&mut rng);
    perm[k * b..(k + 1) * b].to_vec()
}

struct Forward<T: Scalar> {
    tape: Tape<T>,
    binder: ParamBinder,
    terms: Vec<Var>,
}

fn forward<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &LearningDiagram<T>,
    mode: &EvalMode,
) -> Result<Forward<T>, CompileError> {
    let graph = diagram.graph();
    let mut tape = Tape::new();
    let mut binder = ParamBinder::new();
    let mut inputs: BTreeMap<VertexId, (Var, T)> = BTreeMap::new();
    let mut caches: BTreeMap<VertexId, BTreeMap<Vec<EdgeId>, Var>> = BTreeMap::new();
    let mut terms = Vec::with_capacity(compiled.terms.len());
    for term in &compiled.terms {
        let src = term.pair.src;
        if let std::collections::btree_map::Entry::Vacant(e) = inputs.entry(src) {
            let ds = diagram
                .space(src)
                .dataset
                .as_ref()
                .ok_or_else(|| SemanticsError::NoDatasetOnIndexing(graph.vertex_label(src).into()))?;
            let n = ds.len();
            let (rows, scale) = match mode {
                EvalMode::FullBatch => (ds.all_rows(), T::one()),
                EvalMode::MiniBatch {
                    seed,
                    step,
                    scale_to_full,
                } => {
                    let idx = minibatch_rows(n, ds.batch_size, *seed, src, *step);
                    let scale = if *scale_to_full {
                        T::from_usize(n).unwrap() / T::from_usize(idx.len()).unwrap()
                    } else {
                        T::one()
                    };
                    (ds.rows(&idx), scale)
                }
                EvalMode::Rows(map) => match map.get(&src) {
                    Some(idx) => {
                        if let Some(&row) = idx.iter().find(|&&i| i >= n) {
                            return Err(CompileError::RowOutOfRange {
                                vertex: graph.vertex_label(src).into(),
                                row,
                            });
                        }
                        (ds.rows(idx), T::one())
                    }
                    None => (ds.all_rows(), T::one()),
                },
            };
            let x = tape.leaf(rows);
            e.insert((x, scale));
        }
        let (x, scale) = inputs[&src];
        let cache = caches.entry(src).or_default();
        let a = diagram.forward_path(&mut tape, &mut binder, cache, &term.pair.first, x)?;
        let b = diagram.forward_path(&mut tape, &mut binder, cache, &term.pair.second, x)?;
        let cost = term.metric.apply(&mut tape, a, b)?;
        let factor = term.weight * scale;
        let cost = if factor == T::one() {
            cost
        } else {
            tape.scale(cost, factor)
        };
        terms.push(cost);
    }
    Ok(Forward {
        tape,
        binder,
        terms,
    })
}

fn summarize<T: Scalar>(f: &Forward<T>) -> Evaluation<T> {
    let per_term: Vec<T> = f.terms.iter().map(|v| f.tape.value(*v).data()[0]).collect();
    let total = per_term.iter().fold(T::zero(), |acc, &x| acc + x);
    Evaluation { total, per_term }
}

/// Total and per-term values; `total` is the left-to-right sum of `per_term`.
pub fn evaluate<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &LearningDiagram<T>,
    mode: &EvalMode,
) -> Result<Evaluation<T>, CompileError> {
    Ok(summarize(&forward(compiled, diagram, mode)?))
}

/// Value and gradient in one pass. Only trainable keys appear in the result.
pub fn value_and_gradient<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &LearningDiagram<T>,
    mode: &EvalMode,
) -> Result<(Evaluation<T>, ParamGrads<T>), CompileError> {
    let f = forward(compiled, diagram, mode)?;
    let eval = summarize(&f);
    let mut grads: ParamGrads<T> = BTreeMap::new();
    let Some((&first, rest)) = f.terms.split_first() else {
        return Ok((eval, grads));
    };
    let Forward {
        mut tape, binder, ..
    } = f;
    let mut total = first;
    for &t in rest {
        total = tape.add(total, t)?;
    }
    let bound: Vec<(String, String, Var)> = binder
        .bound()
        .filter(|(k, _, _)| compiled.param_keys.contains(*k))
        .map(|(k, n, v)| (k.to_string(), n.to_string(), v))
        .collect();
    let g = tape.backward(total)?;
    for (k, n, v) in bound {
        grads.entry(k).or_default().insert(n, g.wrt(v));
    }
    Ok((eval, grads))
}

pub fn gradient<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &LearningDiagram<T>,
    mode: &EvalMode,
) -> Result<ParamGrads<T>, CompileError> {
    value_and_gradient(compiled, diagram, mode).map(|(_, g)| g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Batching {
    Full,
    Mini { scale_to_full: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T: Scalar = f64> {
    pub optimizer: Optimizer<T>,
    pub steps: usize,
    pub batching: Batching,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow<T: Scalar = f64> {
    pub step: usize,
    pub total: T,
    pub per_term: Vec<T>,
}

/// Runs `steps` optimizer updates. Each history row holds the loss seen by
/// that step's gradient, i.e. before its update.
pub fn train<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &mut LearningDiagram<T>,
    config: &TrainConfig<T>,
) -> Result<Vec<HistoryRow<T>>, CompileError> {
    if compiled.param_keys.is_empty() {
        return Err(CompileError::NoTrainableParams);
    }
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mode = match config.batching {
            Batching::Full => EvalMode::FullBatch,
            Batching::Mini { scale_to_full } => EvalMode::MiniBatch {
                seed: config.seed,
                step: step as u64,
                scale_to_full,
            },
        };
        let (eval, grads) = value_and_gradient(compiled, diagram, &mode)?;
        optimizer_step(&mut diagram.params, &grads, &config.optimizer)?;
        history.push(HistoryRow {
            step,
            total: eval.total,
            per_term: eval.per_term,
        });
    }
    Ok(history)
}

/// Worst elementwise disagreement between reverse-mode and central
/// differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: Option<(String, String, usize)>,
    pub checked: usize,
}

/// Compares `gradient` with central differences of step `h` on every
/// trainable scalar. Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<T: Scalar>(
    compiled: &CompiledLoss<T>,
    diagram: &LearningDiagram<T>,
    mode: &EvalMode,
    h: T,
    floor: T,
) -> Result<GradCheck, CompileError> {
    let grads = gradient(compiled, diagram, mode)?;
    let mut work = diagram.clone();
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    for (key, named) in &grads {
        for (name, g) in named {
            for i in 0..g.len() {
                let orig = work.params.tensor(key, name)?.data()[i];
                work.params.tensor_mut(key, name)?.data_mut()[i] = orig + h;
                let plus = evaluate(compiled, &work, mode)?.total;
                work.params.tensor_mut(key, name)?.data_mut()[i] = orig - h;
                let minus = evaluate(compiled, &work, mode)?.total;
                work.params.tensor_mut(key, name)?.data_mut()[i] = orig;
                let numeric = (plus - minus) / (h + h);
                let analytic = g.data()[i];
                let denom = analytic.abs().max(numeric.abs()).max(floor);
                let rel = ((analytic - numeric).abs() / denom).to_f64_lossy();
                report.checked += 1;
                if rel > report.max_rel_err || rel.is_nan() {
                    report.max_rel_err = rel;
                    report.worst = Some((key.clone(), name.clone(), i));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamGroup, ParamStore, Tensor};
    use crate::graph::GraphSpec;
    use crate::semantics::{assign_semantics, Column, Dataset, EdgeModel, ModelSpec, Shape, VertexData};

    /// l -> P -> R and l -> R, affine f, squared L2 at R.
    fn prediction(xs: Vec<f64>, ys: Vec<f64>, w: f64, b: f64, metric_r: MetricSpec) -> LearningDiagram {
        let g = GraphSpec::new()
            .vertices(&["l", "P", "R"])
            .edge("Xtheta", "l", "P")
            .edge("f", "P", "R")
            .edge("Y", "l", "R")
            .order("Y", "Xtheta")
            .indexing(&["l"])
            .build()
            .unwrap();
        let n = xs.len();
        let ds = Dataset::new(
            "d",
            vec![
                Column::new("x", vec![1], xs).unwrap(),
                Column::new("y", vec![1], ys).unwrap(),
            ],
            n.min(2),
        )
        .unwrap();
        let mut vd = BTreeMap::new();
        vd.insert("l".to_string(), VertexData::data(ds));
        vd.insert("P".to_string(), VertexData::space(Shape::vector(1), MetricSpec::Infinite));
        vd.insert("R".to_string(), VertexData::space(Shape::vector(1), metric_r));
        let mut ed = BTreeMap::new();
        ed.insert("Xtheta".to_string(), EdgeModel::projection(&["x"]));
        ed.insert(
            "f".to_string(),
            EdgeModel::model(ModelSpec::Affine { input: 1, output: 1 }, "f"),
        );
        ed.insert("Y".to_string(), EdgeModel::projection(&["y"]));
        let mut params = ParamStore::new();
        let mut t = BTreeMap::new();
        t.insert("w0".to_string(), Tensor::matrix(1, 1, vec![w]));
        t.insert("b0".to_string(), Tensor::vector(vec![b]));
        params.insert_group("f", ParamGroup::new(t));
        assign_semantics(g, vd, ed, params, 0).unwrap()
    }

    #[test]
    fn one_term_for_prediction() {
        let d = prediction(vec![1.0, 2.0], vec![3.0, 5.0], 2.0, 1.0, MetricSpec::SquaredL2);
        let c = compile(&d).unwrap();
        assert_eq!(c.terms.len(), 1);
        assert_eq!(c.param_keys.iter().collect::<Vec<_>>(), vec!["f"]);
        // y = 2x + 1 exactly
        assert_eq!(evaluate(&c, &d, &EvalMode::FullBatch).unwrap().total, 0.0);
    }

    #[test]
    fn infinite_target_gives_no_terms() {
        let d = prediction(vec![1.0], vec![3.0], 2.0, 1.0, MetricSpec::Infinite);
        let c = compile(&d).unwrap();
        assert!(c.terms.is_empty());
        assert_eq!(c.warnings, vec![CompileWarning::NoLossTerms]);
        assert_eq!(evaluate(&c, &d, &EvalMode::FullBatch).unwrap().total, 0.0);
    }

    #[test]
    fn bias_gradient_at_zero_weights() {
        // Loss sum_i (y_i - (w x_i + b))^2 with first argument y: at w = b = 0
        // d/db = -2 sum_i y_i and d/dw = -2 sum_i x_i y_i.
        let xs = vec![-1.0, 1.0, -2.0, 2.0];
        let ys = vec![0.5, 1.5, -1.0, 3.0];
        let d = prediction(xs.clone(), ys.clone(), 0.0, 0.0, MetricSpec::SquaredL2);
        let c = compile(&d).unwrap();
        let g = gradient(&c, &d, &EvalMode::FullBatch).unwrap();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        assert!((g["f"]["b0"].data()[0] + 2.0 * sy).abs() < 1e-12);
        assert!((g["f"]["w0"].data()[0] + 2.0 * sxy).abs() < 1e-12);
    }

    #[test]
    fn frozen_key_absent() {
        let mut d = prediction(vec![1.0, 2.0], vec![0.0, 1.0], 0.3, 0.1, MetricSpec::SquaredL2);
        let f = d.graph().edge_by_label("f").unwrap();
        d.set_frozen(f, true);
        let c = compile(&d).unwrap();
        assert!(c.param_keys.is_empty());
        assert!(gradient(&c, &d, &EvalMode::FullBatch).unwrap().is_empty());
        let cfg = TrainConfig {
            optimizer: Optimizer::sgd(0.1),
            steps: 3,
            batching: Batching::Full,
            seed: 0,
        };
        assert_eq!(train(&c, &mut d, &cfg), Err(CompileError::NoTrainableParams));
    }

    #[test]
    fn zero_steps_leave_params() {
        let mut d = prediction(vec![1.0, 2.0], vec![0.0, 1.0], 0.3, 0.1, MetricSpec::SquaredL2);
        let before = d.params.clone();
        let c = compile(&d).unwrap();
        let cfg = TrainConfig {
            optimizer: Optimizer::adam(0.1),
            steps: 0,
            batching: Batching::Full,
            seed: 0,
        };
        assert!(train(&c, &mut d, &cfg).unwrap().is_empty());
        assert_eq!(d.params, before);
    }

    #[test]
    fn minibatch_rows_partition_epoch() {
        let mut seen: Vec<usize> = (0..3)
            .flat_map(|s| minibatch_rows(7, 2, 11, VertexId(0), s))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert_eq!(minibatch_rows(7, 2, 11, VertexId(0), 4), minibatch_rows(7, 2, 11, VertexId(0), 4));
    }

    #[test]
    fn finite_differences_agree() {
        let d = prediction(vec![0.4, -1.3, 2.2], vec![1.0, 0.2, -0.7], 0.7, -0.2, MetricSpec::L2);
        let c = compile(&d).unwrap();
        let r = gradient_check(&c, &d, &EvalMode::FullBatch, 1e-5, 1e-8).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
        assert_eq!(r.checked, 2);
    }
}
