use std::collections::BTreeMap;

use crate::autodiff::{AutodiffError, Tensor};
use crate::scalar::Scalar;

/// Gradients keyed by parameter-store key, then by tensor name.
pub type ParamGrads<T = f64> = BTreeMap<String, BTreeMap<String, Tensor<T>>>;

#[derive(Clone, Debug, PartialEq)]
struct AdamState<T: Scalar> {
    step: u64,
    first: BTreeMap<String, Tensor<T>>,
    second: BTreeMap<String, Tensor<T>>,
}

/// Named parameter tensors for one key, plus its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup<T: Scalar = f64> {
    tensors: BTreeMap<String, Tensor<T>>,
    adam: Option<AdamState<T>>,
}

impl<T: Scalar> ParamGroup<T> {
    pub fn new(tensors: BTreeMap<String, Tensor<T>>) -> Self {
        Self {
            tensors,
            adam: None,
        }
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    /// Parameter values only; optimizer state is ignored.
    pub fn same_values(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

/// Parameter storage shared by every edge that references a key.
///
/// Edges hold keys, never tensors, so two edges with the same key read and
/// update one set of tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Scalar = f64> {
    groups: BTreeMap<String, ParamGroup<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            groups: BTreeMap::new(),
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.groups.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn group(&self, key: &str) -> Option<&ParamGroup<T>> {
        self.groups.get(key)
    }

    pub fn groups(&self) -> &BTreeMap<String, ParamGroup<T>> {
        &self.groups
    }

    pub fn insert_group(&mut self, key: impl Into<String>, group: ParamGroup<T>) {
        self.groups.insert(key.into(), group);
    }

    pub fn remove(&mut self, key: &str) -> Option<ParamGroup<T>> {
        self.groups.remove(key)
    }

    pub fn tensor(&self, key: &str, name: &str) -> Result<&Tensor<T>, AutodiffError> {
        self.groups
            .get(key)
            .and_then(|g| g.tensors.get(name))
            .ok_or_else(|| AutodiffError::UnknownKey(format!("{key}/{name}")))
    }

    pub fn tensor_mut(&mut self, key: &str, name: &str) -> Result<&mut Tensor<T>, AutodiffError> {
        self.groups
            .get_mut(key)
            .and_then(|g| g.tensors.get_mut(name))
            .ok_or_else(|| AutodiffError::UnknownKey(format!("{key}/{name}")))
    }

    /// Drops all optimizer moments.
    pub fn reset_optimizer(&mut self) {
        for g in self.groups.values_mut() {
            g.adam = None;
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.groups
            .values()
            .flat_map(|g| g.tensors.values())
            .map(Tensor::len)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer<T: Scalar = f64> {
    Sgd { lr: T },
    Adam { lr: T, beta1: T, beta2: T, eps: T },
}

impl<T: Scalar> Optimizer<T> {
    pub fn sgd(lr: T) -> Self {
        Self::Sgd { lr }
    }

    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn adam(lr: T) -> Self {
        Self::Adam {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// Applies one update to every key present in `grads`.
pub fn optimizer_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    optimizer: &Optimizer<T>,
) -> Result<(), AutodiffError> {
    for key in grads.keys() {
        if !store.contains(key) {
            return Err(AutodiffError::UnknownKey(key.clone()));
        }
    }
    for (key, named) in grads {
        let group = store.groups.get_mut(key).expect("checked above");
        match *optimizer {
            Optimizer::Sgd { lr } => {
                for (name, g) in named {
                    let p = group
                        .tensors
                        .get_mut(name)
                        .ok_or_else(|| AutodiffError::UnknownKey(format!("{key}/{name}")))?;
                    for (x, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x = *x - lr * d;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let state = group.adam.get_or_insert_with(|| AdamState {
                    step: 0,
                    first: BTreeMap::new(),
                    second: BTreeMap::new(),
                });
                state.step += 1;
                let t = state.step as i32;
                let c1 = T::one() - beta1.powi(t);
                let c2 = T::one() - beta2.powi(t);
                for (name, g) in named {
                    let p = group
                        .tensors
                        .get_mut(name)
                        .ok_or_else(|| AutodiffError::UnknownKey(format!("{key}/{name}")))?;
                    let m = state
                        .first
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
                    let v = state
                        .second
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
                    for i in 0..p.len() {
                        let gi = g.data()[i];
                        let mi = beta1 * m.data()[i] + (T::one() - beta1) * gi;
                        let vi = beta2 * v.data()[i] + (T::one() - beta2) * gi * gi;
                        m.data_mut()[i] = mi;
                        v.data_mut()[i] = vi;
                        let mhat = mi / c1;
                        let vhat = vi / c2;
                        p.data_mut()[i] = p.data()[i] - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
    Ok(())
}
