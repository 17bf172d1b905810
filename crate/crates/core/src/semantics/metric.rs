//! Cost functions attached to vertices.
//!
//! Every metric is applied row-wise to two `[rows, dim]` batches and the row
//! costs are summed. `Infinite` marks spaces whose distinct points are
//! infinitely far apart; such vertices never produce loss terms.

use std::fmt;
use std::sync::Arc;

use crate::autodiff::{Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::semantics::SemanticsError;

/// User-registered cost. Must be built from tape primitives so it can be
/// differentiated.
pub trait CustomMetric<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    /// Whether `d(x, x) = 0` and the triangle inequality hold.
    fn is_lawvere(&self) -> bool;

    /// Summed cost over the rows of `a` and `b`, as a `[1]` node.
    fn apply(&self, tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var, SemanticsError>;
}

#[derive(Clone)]
pub enum MetricSpec<T: Scalar = f64> {
    Infinite,
    L2,
    L1,
    SquaredL2,
    /// `-sum a_i ln b_i`, with `a` the target-side (first) argument.
    CrossEntropy,
    /// `KL(softmax(a / T) || softmax(b / T))` on logits.
    KlDivergence { temperature: T },
    /// `sum max(b_i - a_i, 0)`.
    AsymmetricGap,
    Custom(Arc<dyn CustomMetric<T>>),
}

impl<T: Scalar> PartialEq for MetricSpec<T> {
    fn eq(&self, other: &Self) -> bool {
        use MetricSpec::*;
        match (self, other) {
            (Infinite, Infinite)
            | (L2, L2)
            | (L1, L1)
            | (SquaredL2, SquaredL2)
            | (CrossEntropy, CrossEntropy)
            | (AsymmetricGap, AsymmetricGap) => true,
            (KlDivergence { temperature: a }, KlDivergence { temperature: b }) => a == b,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl<T: Scalar> fmt::Debug for MetricSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl<T: Scalar> MetricSpec<T> {
    pub fn name(&self) -> String {
        match self {
            MetricSpec::Infinite => "infinite".into(),
            MetricSpec::L2 => "l2".into(),
            MetricSpec::L1 => "l1".into(),
            MetricSpec::SquaredL2 => "squared_l2".into(),
            MetricSpec::CrossEntropy => "cross_entropy".into(),
            MetricSpec::KlDivergence { temperature } => format!("kl(T={temperature})"),
            MetricSpec::AsymmetricGap => "asymmetric_gap".into(),
            MetricSpec::Custom(c) => format!("custom:{}", c.name()),
        }
    }

    /// False only for `Infinite`.
    pub fn is_finite(&self) -> bool {
        !matches!(self, MetricSpec::Infinite)
    }

    /// L2, L1 and AsymmetricGap are Lawvere metrics; the divergences are not.
    pub fn is_lawvere(&self) -> bool {
        match self {
            MetricSpec::Infinite | MetricSpec::L2 | MetricSpec::L1 | MetricSpec::AsymmetricGap => {
                true
            }
            MetricSpec::SquaredL2 | MetricSpec::CrossEntropy | MetricSpec::KlDivergence { .. } => {
                false
            }
            MetricSpec::Custom(c) => c.is_lawvere(),
        }
    }

    /// Records the summed row costs on the tape.
    pub fn apply(&self, tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var, SemanticsError> {
        if tape.value(a).shape() != tape.value(b).shape() {
            return Err(SemanticsError::ShapeMismatch(format!(
                "metric arguments {:?} and {:?}",
                tape.value(a).shape(),
                tape.value(b).shape()
            )));
        }
        let out = match self {
            MetricSpec::Infinite => {
                let (av, bv) = (tape.value(a), tape.value(b));
                let differ = av.data() != bv.data();
                tape.leaf(Tensor::scalar(if differ { T::infinity() } else { T::zero() }))
            }
            MetricSpec::SquaredL2 => {
                let d = tape.sub(a, b)?;
                let sq = tape.mul(d, d)?;
                tape.sum(sq)
            }
            MetricSpec::L2 => {
                let d = tape.sub(a, b)?;
                let sq = tape.mul(d, d)?;
                let rows = tape.sum_rows(sq);
                let norms = tape.sqrt(rows);
                tape.sum(norms)
            }
            MetricSpec::L1 => {
                let d = tape.sub(a, b)?;
                let nd = tape.scale(d, -T::one());
                let pos = tape.relu(d);
                let neg = tape.relu(nd);
                let abs = tape.add(pos, neg)?;
                tape.sum(abs)
            }
            MetricSpec::AsymmetricGap => {
                let d = tape.sub(b, a)?;
                let gap = tape.relu(d);
                tape.sum(gap)
            }
            MetricSpec::CrossEntropy => {
                if let Some(x) = tape.value(b).data().iter().find(|&&x| !(x > T::zero())) {
                    return Err(SemanticsError::DomainError(format!(
                        "cross entropy needs positive second argument, found {x}"
                    )));
                }
                let lb = tape.log(b);
                let prod = tape.mul(a, lb)?;
                let s = tape.sum(prod);
                tape.scale(s, -T::one())
            }
            MetricSpec::KlDivergence { temperature } => {
                let p = tape.softmax(a, *temperature)?;
                let q = tape.softmax(b, *temperature)?;
                let lp = tape.log(p);
                let lq = tape.log(q);
                let diff = tape.sub(lp, lq)?;
                let prod = tape.mul(p, diff)?;
                tape.sum(prod)
            }
            MetricSpec::Custom(c) => c.apply(tape, a, b)?,
        };
        Ok(out)
    }
}

/// Cost between two single points of equal shape.
pub fn metric_eval<T: Scalar>(spec: &MetricSpec<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<T, SemanticsError> {
    if a.shape() != b.shape() {
        return Err(SemanticsError::ShapeMismatch(format!(
            "metric arguments {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut tape = Tape::new();
    let av = tape.leaf(Tensor::matrix(1, a.len(), a.data().to_vec()));
    let bv = tape.leaf(Tensor::matrix(1, b.len(), b.data().to_vec()));
    let out = spec.apply(&mut tape, av, bv)?;
    Ok(tape.value(out).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor<f64> {
        Tensor::vector(x.to_vec())
    }

    #[test]
    fn l2_self_distance_zero() {
        let x = v(&[0.3, -4.0, 2.5]);
        assert_eq!(metric_eval(&MetricSpec::L2, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn infinite_metric() {
        let (a, b) = (v(&[1.0]), v(&[2.0]));
        assert_eq!(metric_eval(&MetricSpec::Infinite, &a, &b).unwrap(), f64::INFINITY);
        assert_eq!(metric_eval(&MetricSpec::Infinite, &a, &a).unwrap(), 0.0);
    }

    #[test]
    fn kl_with_temperature_two() {
        // Independent scalar evaluation: logits (1,0) and (0,1) at T = 2.
        // p = (s, 1-s), q = (1-s, s) with s = e^0.5 / (e^0.5 + 1).
        let s = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        let expected = s * (s / (1.0 - s)).ln() + (1.0 - s) * ((1.0 - s) / s).ln();
        // Frozen: 0.12245933120185457 (= (2s - 1) * 0.5).
        assert!((expected - 0.12245933120185457).abs() < 1e-15);
        let got = metric_eval(
            &MetricSpec::KlDivergence { temperature: 2.0 },
            &v(&[1.0, 0.0]),
            &v(&[0.0, 1.0]),
        )
        .unwrap();
        assert!((got - 0.12245933120185457).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_domain_error() {
        let err = metric_eval(&MetricSpec::CrossEntropy, &v(&[1.0, 0.0]), &v(&[1.0, 0.0]));
        assert!(matches!(err, Err(SemanticsError::DomainError(_))));
        let ok = metric_eval(&MetricSpec::CrossEntropy, &v(&[1.0, 0.0]), &v(&[0.5, 0.5])).unwrap();
        assert!((ok - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_gap_is_asymmetric() {
        let (x, y) = (v(&[0.0]), v(&[1.0]));
        let xy = metric_eval(&MetricSpec::AsymmetricGap, &x, &y).unwrap();
        let yx = metric_eval(&MetricSpec::AsymmetricGap, &y, &x).unwrap();
        assert_eq!((xy, yx), (1.0, 0.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(metric_eval(&MetricSpec::L1, &v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn lawvere_flags() {
        assert!(MetricSpec::<f64>::L2.is_lawvere());
        assert!(MetricSpec::<f64>::AsymmetricGap.is_lawvere());
        assert!(!MetricSpec::<f64>::CrossEntropy.is_lawvere());
        assert!(!MetricSpec::<f64>::SquaredL2.is_lawvere());
    }
}
