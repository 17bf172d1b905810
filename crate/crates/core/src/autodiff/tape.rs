//! Append-only tape recording primitive operations for reverse-mode
//! differentiation.
//!
//! Values are matrices in the sense of [`Tensor::rows`] / [`Tensor::cols`]:
//! row-wise primitives (softmax, row sums, concat, slice) act on the last
//! dimension. Nodes are appended in evaluation order, so the tape is already
//! topologically sorted and `backward` is a single reverse sweep.

use crate::autodiff::{AutodiffError, Tensor};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Softmax(Var, T),
    Sum(Var),
    SumRows(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize, len: usize },
}

#[derive(Clone, Debug)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

fn mismatch(msg: String) -> AutodiffError {
    AutodiffError::ShapeMismatch(msg)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (constant or parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = (av.rows(), av.cols());
        let (k2, n) = (bv.rows(), bv.cols());
        if k != k2 {
            return Err(mismatch(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (ad, bd) = (av.data(), bv.data());
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = ad[i * k + p];
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + aip * bd[p * n + j];
                }
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), AutodiffError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch(format!(
                "{what} {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Bias add: `b` (length `cols`) is added to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        if bv.len() != c {
            return Err(mismatch(format!(
                "bias {:?} for rows of {:?}",
                bv.shape(),
                av.shape()
            )));
        }
        let mut out = av.as_matrix();
        let bias = bv.data().to_vec();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x = *x + bias[i % c];
        }
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::ln);
        self.push(v, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(T::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    /// Row-wise softmax of `a / temperature`.
    pub fn softmax(&mut self, a: Var, temperature: T) -> Result<Var, AutodiffError> {
        if !(temperature > T::zero()) {
            return Err(mismatch(format!(
                "softmax temperature must be positive, got {temperature}"
            )));
        }
        let av = self.value(a).as_matrix();
        let c = av.cols();
        let mut out = Vec::with_capacity(av.len());
        for i in 0..av.rows() {
            let row = av.row(i);
            let max = row
                .iter()
                .fold(T::neg_infinity(), |m, &x| if x > m { x } else { m });
            let exps: Vec<T> = row.iter().map(|&x| ((x - max) / temperature).exp()).collect();
            let z: T = exps.iter().copied().sum();
            out.extend(exps.into_iter().map(|e| e / z));
        }
        let v = Tensor::matrix(av.rows(), c, out);
        Ok(self.push(v, Op::Softmax(a, temperature)))
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Sum over the last dimension, giving one value per row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v: Vec<T> = (0..av.rows()).map(|i| av.row(i).iter().copied().sum()).collect();
        let v = Tensor::vector(v);
        self.push(v, Op::SumRows(a))
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = parts
            .first()
            .ok_or_else(|| mismatch("concat of nothing".to_string()))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(mismatch("concat with differing row counts".to_string()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, out), Op::Concat(parts.to_vec())))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        if len == 0 || start + len > xv.cols() {
            return Err(mismatch(format!(
                "slice {start}..{} of {:?}",
                start + len,
                xv.shape()
            )));
        }
        let mut out = Vec::with_capacity(xv.rows() * len);
        for i in 0..xv.rows() {
            out.extend_from_slice(&xv.row(i)[start..start + len]);
        }
        let v = Tensor::matrix(xv.rows(), len, out);
        Ok(self.push(v, Op::Slice { x, start, len }))
    }

    /// Reverse sweep from a scalar output. Consumes the tape.
    pub fn backward(self, output: Var) -> Result<Gradients<T>, AutodiffError> {
        let out_shape = self.value(output).shape().to_vec();
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NonScalarOutput(out_shape));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[output.0] = Some(Tensor::full(out_shape, T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    let (ad, bd, gd) = (av.data(), bv.data(), g.data());
                    let mut da = vec![T::zero(); m * k];
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = T::zero();
                            for j in 0..n {
                                s = s + gd[i * n + j] * bd[p * n + j];
                                db[p * n + j] = db[p * n + j] + ad[i * k + p] * gd[i * n + j];
                            }
                            da[i * k + p] = s;
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                    acc(&mut grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::AddRow(a, b) => {
                    let bv = val(*b);
                    let c = bv.len();
                    let mut db = vec![T::zero(); c];
                    for (i, &x) in g.data().iter().enumerate() {
                        db[i % c] = db[i % c] + x;
                    }
                    acc(&mut grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                    let ga = g.reshape(val(*a).shape().to_vec())?;
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, *a, g.map(|x| x * c));
                }
                Op::Relu(a) => {
                    let d = g.zip_map(val(*a), |x, y| if y > T::zero() { x } else { T::zero() });
                    acc(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    acc(&mut grads, *a, g.zip_map(&node.value, |x, y| x * y));
                }
                Op::Log(a) => {
                    acc(&mut grads, *a, g.zip_map(val(*a), |x, y| x / y));
                }
                Op::Sqrt(a) => {
                    // Subgradient 0 at the origin.
                    let two = T::lit(2.0);
                    let d = g.zip_map(&node.value, |x, y| {
                        if y > T::zero() {
                            x / (two * y)
                        } else {
                            T::zero()
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Softmax(a, temp) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut d = vec![T::zero(); y.len()];
                    for i in 0..y.rows() {
                        let yr = y.row(i);
                        let gr = &g.data()[i * c..(i + 1) * c];
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for j in 0..c {
                            d[i * c + j] = yr[j] * (gr[j] - dot) / *temp;
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(val(*a).shape().to_vec(), d)?);
                }
                Op::Sum(a) => {
                    let s = g.data()[0];
                    acc(&mut grads, *a, Tensor::full(val(*a).shape().to_vec(), s));
                }
                Op::SumRows(a) => {
                    let av = val(*a);
                    let c = av.cols();
                    let d: Vec<T> = (0..av.len()).map(|i| g.data()[i / c]).collect();
                    acc(&mut grads, *a, Tensor::new(av.shape().to_vec(), d)?);
                }
                Op::Concat(parts) => {
                    let total = node.value.cols();
                    let rows = node.value.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = val(p);
                        let w = pv.cols();
                        let mut d = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        acc(&mut grads, p, Tensor::new(pv.shape().to_vec(), d)?);
                        offset += w;
                    }
                }
                Op::Slice { x, start, len } => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let mut d = vec![T::zero(); xv.len()];
                    for i in 0..xv.rows() {
                        for j in 0..*len {
                            d[i * c + start + j] = g.data()[i * len + j];
                        }
                    }
                    acc(&mut grads, *x, Tensor::new(xv.shape().to_vec(), d)?);
                }
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Result of [`Tape::backward`]: one gradient slot per recorded node.
#[derive(Debug)]
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a leaf; zero when the output never touched it.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }
}
