//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] is bound to one [`ParamVector`] and records every primitive
//! as it is evaluated, so each node's value is available immediately. Nodes
//! are appended in evaluation order, which makes the tape acyclic with all
//! inputs preceding their consumers; [`Tape::backward`] walks it once in
//! reverse. Tapes are cheap and are rebuilt for every evaluation.

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;
use crate::numeric::params::{Gradient, ParamVector};

/// Floor added inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Param {
        offset: usize,
    },
    Constant,
    /// `x · wᵀ + b` with x: n×a, w: m×a, b: 1×m.
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Log(Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    /// Gathers single entries `(row, col)` into a column vector.
    Pick {
        x: Var,
        at: Vec<(usize, usize)>,
    },
    /// Identity forward; multiplies the incoming adjoint by `coef` backward.
    GradScale {
        x: Var,
        coef: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param { .. } => "param",
            Op::Constant => "constant",
            Op::Affine { .. } => "affine",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Square(_) => "square",
            Op::Log(_) => "log",
            Op::SoftmaxRows(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::RowSum(_) => "row_sum",
            Op::Pick { .. } => "pick",
            Op::GradScale { .. } => "grad_scale",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
}

pub struct Tape<'p> {
    params: &'p ParamVector,
    nodes: Vec<Node>,
    param_cache: Vec<(usize, Var)>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamVector) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_cache: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamVector {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for the named parameter segment, shaped as the segment.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let seg = self.params.layout().segment(name)?;
        if let Some(&(_, v)) = self.param_cache.iter().find(|(o, _)| *o == seg.offset) {
            return Ok(v);
        }
        let value = Matrix::from_vec(
            seg.rows,
            seg.cols,
            self.params.values()[seg.range()].to_vec(),
        )?;
        let offset = seg.offset;
        let v = self.push(Op::Param { offset }, value);
        self.param_cache.push((offset, v));
        Ok(v)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, a) = xv.shape();
        let m = wv.rows();
        assert_eq!(
            wv.cols(),
            a,
            "affine: weight has {} inputs, x has {a}",
            wv.cols()
        );
        assert_eq!(bv.shape(), (1, m), "affine: bias must be 1x{m}");
        let mut out = Matrix::zeros(n, m);
        for r in 0..n {
            let xr = xv.row(r);
            let orow = out.row_mut(r);
            for (j, o) in orow.iter_mut().enumerate() {
                let wr = wv.row(j);
                let mut acc = bv.as_slice()[j];
                for k in 0..a {
                    acc += xr[k] * wr[k];
                }
                *o = acc;
            }
        }
        self.push(Op::Affine { x, w, b }, out)
    }

    fn zip_same(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "{what}: shape mismatch");
        let data = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(av.rows(), av.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_same(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    /// `ln(x + LOG_EPS)` elementwise.
    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| (x + LOG_EPS).ln());
        self.push(Op::Log(a), v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Op::Sum(a), Matrix::scalar(s))
    }

    /// Mean over all entries; an empty input has mean zero.
    pub fn mean(&mut self, a: Var) -> Var {
        let xs = self.value(a).as_slice();
        let m = if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        self.push(Op::Mean(a), Matrix::scalar(m))
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.iter_rows().map(|r| r.iter().sum()).collect();
        let v = Matrix::from_vec(av.rows(), 1, data).expect("column");
        self.push(Op::RowSum(a), v)
    }

    pub fn pick(&mut self, x: Var, at: Vec<(usize, usize)>) -> Var {
        let xv = self.value(x);
        let data = at.iter().map(|&(r, c)| xv.get(r, c)).collect();
        let v = Matrix::from_vec(at.len(), 1, data).expect("column");
        self.push(Op::Pick { x, at }, v)
    }

    /// Identity in the forward direction; the backward pass multiplies the
    /// adjoint by `coef`.
    pub fn grad_scale(&mut self, x: Var, coef: f64) -> Var {
        let v = self.value(x).clone();
        self.push(Op::GradScale { x, coef }, v)
    }

    /// Gradient reversal: identity forward, negated adjoint backward.
    pub fn grad_reverse(&mut self, x: Var) -> Var {
        self.grad_scale(x, -1.0)
    }

    /// First node (in evaluation order) up to `upto` holding a non-finite value.
    pub fn first_non_finite(&self, upto: Var) -> Option<(usize, &'static str)> {
        self.nodes[..=upto.0]
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    /// Scalar value of `out`, or `NonFiniteLoss` naming the first bad node.
    pub fn finite_scalar(&self, out: Var) -> Result<f64> {
        let v = self.scalar(out);
        if v.is_finite() {
            return Ok(v);
        }
        let (node, op) = self.first_non_finite(out).unwrap_or((out.0, "output"));
        Err(Error::NonFiniteLoss { node, op })
    }

    /// Reverse sweep from the scalar node `out`; returns d(out)/d(params).
    pub fn backward(&self, out: Var) -> Gradient {
        assert_eq!(
            self.value(out).shape(),
            (1, 1),
            "backward needs a scalar output"
        );
        let mut grad = Gradient::zeros(self.params.layout().clone());
        let mut adj: Vec<Option<Matrix>> = (0..=out.0).map(|_| None).collect();
        adj[out.0] = Some(Matrix::scalar(1.0));

        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Param { offset } => {
                    let dst = &mut grad.values_mut()[*offset..*offset + g.as_slice().len()];
                    for (d, s) in dst.iter_mut().zip(g.as_slice()) {
                        *d += s;
                    }
                }
                Op::Constant => {}
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, a) = xv.shape();
                    let m = wv.rows();
                    let mut dx = Matrix::zeros(n, a);
                    let mut dw = Matrix::zeros(m, a);
                    let mut db = Matrix::zeros(1, m);
                    for r in 0..n {
                        let gr = g.row(r);
                        let xr = xv.row(r);
                        for (j, &gj) in gr.iter().enumerate().take(m) {
                            if gj == 0.0 {
                                continue;
                            }
                            db.as_mut_slice()[j] += gj;
                            let wr = wv.row(j);
                            let dxr = dx.row_mut(r);
                            for k in 0..a {
                                dxr[k] += gj * wr[k];
                            }
                            let dwr = dw.row_mut(j);
                            for k in 0..a {
                                dwr[k] += gj * xr[k];
                            }
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                    accumulate(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|v| -v));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = hadamard(&g, self.value(*b));
                    let db = hadamard(&g, self.value(*a));
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.map(|v| c * v)),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Tanh(a) => {
                    let d = zip(&g, &node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut adj, *a, d);
                }
                Op::Relu(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    accumulate(&mut adj, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = zip(&g, &node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut adj, *a, d);
                }
                Op::Square(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| 2.0 * x * gv);
                    accumulate(&mut adj, *a, d);
                }
                Op::Log(a) => {
                    let d = zip(&g, self.value(*a), |gv, x| gv / (x + LOG_EPS));
                    accumulate(&mut adj, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for (dst, (p, q)) in d.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *dst = p * (q - inner);
                        }
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    if r * c > 0 {
                        let s = g.item() / (r * c) as f64;
                        accumulate(&mut adj, *a, Matrix::filled(r, c, s));
                    }
                }
                Op::RowSum(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        let gi = g.as_slice()[i];
                        d.row_mut(i).iter_mut().for_each(|v| *v = gi);
                    }
                    accumulate(&mut adj, *a, d);
                }
                Op::Pick { x, at } => {
                    let (r, c) = self.value(*x).shape();
                    let mut d = Matrix::zeros(r, c);
                    for (k, &(i, j)) in at.iter().enumerate() {
                        let cur = d.get(i, j);
                        d.set(i, j, cur + g.as_slice()[k]);
                    }
                    accumulate(&mut adj, *x, d);
                }
                Op::GradScale { x, coef } => accumulate(&mut adj, *x, g.map(|v| coef * v)),
            }
        }
        grad
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, contribution: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, c) in existing
                .as_mut_slice()
                .iter_mut()
                .zip(contribution.as_slice())
            {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    zip(a, b, |x, y| x * y)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
