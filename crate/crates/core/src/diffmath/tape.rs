//! Wengert-list reverse-mode AD over row-major matrices.
//!
//! Every value on the tape is a 2-D buffer; scalars are `1×1`. Operations are
//! appended in evaluation order, so node indices are already a topological
//! order and `backward` is a single reverse sweep.

use super::{gemm, ParamTensor, Real};
use crate::{Error, Result};

pub type Shape = (usize, usize);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, F),
    Offset(Var, F),
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<usize>),
    GroupSum(Var, usize),
    RowSum(Var),
    ExclusiveCumsum(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    Sqrt(Var),
    Square(Var),
    ClampMin(Var, F),
    Sum(Var),
    Mean(Var),
}

#[derive(Clone, Debug)]
struct Node<F> {
    value: Vec<F>,
    shape: Shape,
    op: Op<F>,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    visits: usize,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub(crate) fn softplus<F: Real>(x: F) -> F {
    // max(x, 0) + ln(1 + e^{-|x|})
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            visits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a `1×1` node.
    pub fn item(&self, v: Var) -> F {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    /// Gradient from the most recent `backward`; `None` when the node is not
    /// on a path to the loss.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Number of nodes processed by the last `backward` sweep.
    pub fn backward_visits(&self) -> usize {
        self.visits
    }

    fn push(&mut self, value: Vec<F>, shape: Shape, op: Op<F>, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.0 * shape.1);
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, shape: Shape, values: Vec<F>, requires_grad: bool) -> Var {
        assert_eq!(shape.0 * shape.1, values.len(), "leaf shape {shape:?}");
        self.push(values, shape, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, shape: Shape, values: Vec<F>) -> Var {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&mut self, x: F) -> Var {
        self.constant((1, 1), vec![x])
    }

    /// Records a parameter tensor as a leaf. Its gradient can be copied back
    /// with [`Tape::grad`] after `backward`.
    pub fn param(&mut self, p: &ParamTensor<F>) -> Var {
        let shape = p.matrix_shape();
        self.leaf(shape, p.values().to_vec(), p.requires_grad)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- element-wise binary ops with scalar broadcast ----

    fn broadcast_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa == sb || sb == (1, 1) {
            Ok(sa)
        } else if sa == (1, 1) {
            Ok(sb)
        } else {
            Err(Error::Shape {
                op,
                lhs: sa,
                rhs: sb,
            })
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(F, F) -> F,
        op: Op<F>,
    ) -> Result<Var> {
        let shape = self.broadcast_shape(name, a, b)?;
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let n = shape.0 * shape.1;
        let value: Vec<F> = if av.len() == bv.len() {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else if av.len() == 1 {
            let x = av[0];
            bv.iter().map(|&y| f(x, y)).collect()
        } else {
            let y = bv[0];
            av.iter().map(|&x| f(x, y)).collect()
        };
        debug_assert_eq!(value.len(), n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, shape, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&x| x * c).collect();
        let rg = self.rg(&[a]);
        self.push(value, self.shape(a), Op::Scale(a, c), rg)
    }

    pub fn offset(&mut self, a: Var, c: F) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&x| x + c).collect();
        let rg = self.rg(&[a]);
        self.push(value, self.shape(a), Op::Offset(a, c), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -F::one())
    }

    // ---- matrix ops ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: (m, k),
                rhs: (k2, n),
            });
        }
        let mut out = vec![F::zero(); m * n];
        gemm(
            m,
            k,
            n,
            &self.nodes[a.0].value,
            false,
            &self.nodes[b.0].value,
            false,
            F::zero(),
            &mut out,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, (m, n), Op::MatMul(a, b), rg))
    }

    /// `x[m,n] + bias[1,n]` applied to every row.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        let sb = self.shape(bias);
        if sb != (1, n) {
            return Err(Error::Shape {
                op: "add_row",
                lhs: (m, n),
                rhs: sb,
            });
        }
        let bv = &self.nodes[bias.0].value;
        let mut out = self.nodes[x.0].value.clone();
        for row in out.chunks_exact_mut(n.max(1)) {
            for (o, &b) in row.iter_mut().zip(bv) {
                *o = *o + b;
            }
        }
        let rg = self.rg(&[x, bias]);
        Ok(self.push(out, (m, n), Op::AddRow(x, bias), rg))
    }

    /// Scales row `i` of `x[m,n]` by `w[i]` where `w` is `m×1`.
    pub fn mul_col(&mut self, x: Var, w: Var) -> Result<Var> {
        let (m, n) = self.shape(x);
        let sw = self.shape(w);
        if sw != (m, 1) {
            return Err(Error::Shape {
                op: "mul_col",
                lhs: (m, n),
                rhs: sw,
            });
        }
        let wv = &self.nodes[w.0].value;
        let mut out = self.nodes[x.0].value.clone();
        if n > 0 {
            for (row, &s) in out.chunks_exact_mut(n).zip(wv) {
                row.iter_mut().for_each(|o| *o = *o * s);
            }
        }
        let rg = self.rg(&[x, w]);
        Ok(self.push(out, (m, n), Op::MulCol(x, w), rg))
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(x, weight)?;
        self.add_row(y, bias)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.shape(parts[0]).0;
        for &p in parts {
            if self.shape(p).0 != m {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]),
                    rhs: self.shape(p),
                });
            }
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.nodes[p.0].value[i * c..(i + 1) * c]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(out, (m, total), Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if start >= end || end > n {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: (m, n),
                rhs: (start, end),
            });
        }
        let w = end - start;
        let xv = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&xv[i * n + start..i * n + end]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, (m, w), Op::SliceCols(x, start), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(x);
        if s.0 * s.1 != shape.0 * shape.1 {
            return Err(Error::Shape {
                op: "reshape",
                lhs: s,
                rhs: shape,
            });
        }
        let value = self.nodes[x.0].value.clone();
        let rg = self.rg(&[x]);
        Ok(self.push(value, shape, Op::Reshape(x), rg))
    }

    /// Selects rows of `x` by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (m, n) = self.shape(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: (m, n),
                rhs: (bad, 0),
            });
        }
        let xv = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(&xv[r * n..(r + 1) * n]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, (rows.len(), n), Op::Gather(x, rows.to_vec()), rg))
    }

    /// Sums consecutive groups of `group` rows: `[r·group, c] → [r, c]`.
    pub fn group_sum_rows(&mut self, x: Var, group: usize) -> Result<Var> {
        let (m, n) = self.shape(x);
        if group == 0 || m % group != 0 {
            return Err(Error::Shape {
                op: "group_sum_rows",
                lhs: (m, n),
                rhs: (group, 1),
            });
        }
        let r = m / group;
        let xv = &self.nodes[x.0].value;
        let mut out = vec![F::zero(); r * n];
        for (i, o) in out.chunks_exact_mut(n.max(1)).enumerate().take(r) {
            for s in 0..group {
                let row = &xv[(i * group + s) * n..(i * group + s + 1) * n];
                for (acc, &v) in o.iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(out, (r, n), Op::GroupSum(x, group), rg))
    }

    /// Sum across columns: `[m, n] → [m, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let xv = &self.nodes[x.0].value;
        let out: Vec<F> = if n == 0 {
            vec![F::zero(); m]
        } else {
            xv.chunks_exact(n)
                .map(|row| row.iter().fold(F::zero(), |a, &b| a + b))
                .collect()
        };
        let rg = self.rg(&[x]);
        self.push(out, (m, 1), Op::RowSum(x), rg)
    }

    /// Exclusive prefix sum along each row: `out[i, j] = Σ_{k<j} x[i, k]`.
    pub fn exclusive_cumsum(&mut self, x: Var) -> Var {
        let (m, n) = self.shape(x);
        let xv = &self.nodes[x.0].value;
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let mut acc = F::zero();
            for j in 0..n {
                out[i * n + j] = acc;
                acc = acc + xv[i * n + j];
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, (m, n), Op::ExclusiveCumsum(x), rg)
    }

    // ---- element-wise unary ----

    fn unary(&mut self, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Var {
        let value = self.nodes[x.0].value.iter().map(|&v| f(v)).collect();
        let rg = self.rg(&[x]);
        self.push(value, self.shape(x), op, rg)
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sin(), Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.cos(), Op::Cos(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(F::zero()), Op::Relu(x))
    }

    /// `max(0, x)`; same node as [`Tape::relu`].
    pub fn max0(&mut self, x: Var) -> Var {
        self.relu(x)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// `max(x, floor)`; the gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: F) -> Var {
        self.unary(x, |v| v.max(floor), Op::ClampMin(x, floor))
    }

    // ---- reductions ----

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.iter().fold(F::zero(), |a, &b| a + b);
        let rg = self.rg(&[x]);
        self.push(vec![s], (1, 1), Op::Sum(x), rg)
    }

    /// Sequential sum divided by the element count.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let n = F::from_usize(v.len().max(1)).unwrap();
        let s = v.iter().fold(F::zero(), |a, &b| a + b) / n;
        let rg = self.rg(&[x]);
        self.push(vec![s], (1, 1), Op::Mean(x), rg)
    }

    // ---- reverse sweep ----

    /// Accumulates `∂loss/∂v` for every node on a path to `loss`. Nodes are
    /// visited once each in reverse tape order, so summation order is fixed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        self.visits = 0;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.visits += 1;
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[F]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let out = &node.value;
        let (m, n) = node.shape;

        // Element-wise contribution indexed by the target's own elements.
        macro_rules! acc {
            ($target:expr, $f:expr) => {
                accumulate(nodes, grads, $target, g.len(), false, $f)
            };
        }
        // Contribution indexed by output element; a scalar target receives
        // the sum over the output.
        macro_rules! acc_bcast {
            ($target:expr, $f:expr) => {
                accumulate(nodes, grads, $target, g.len(), true, $f)
            };
        }
        let val = |v: Var, k: usize| -> F {
            let x = &nodes[v.0].value;
            if x.len() == 1 {
                x[0]
            } else {
                x[k]
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc_bcast!(*a, |k| g[k]);
                acc_bcast!(*b, |k| g[k]);
            }
            Op::Sub(a, b) => {
                acc_bcast!(*a, |k| g[k]);
                acc_bcast!(*b, |k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                acc_bcast!(a, |k| g[k] * val(b, k));
                acc_bcast!(b, |k| g[k] * val(a, k));
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                acc_bcast!(a, |k| g[k] / val(b, k));
                acc_bcast!(b, |k| {
                    let d = val(b, k);
                    -g[k] * val(a, k) / (d * d)
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                acc!(*a, |k| g[k] * c);
            }
            Op::Offset(a, _) | Op::Reshape(a) => acc!(*a, |k| g[k]),
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let k = nodes[a.0].shape.1;
                if nodes[a.0].requires_grad {
                    let len = m * k;
                    let buf = grads[a.0].get_or_insert_with(|| vec![F::zero(); len]);
                    // dA = dC · Bᵀ
                    gemm(m, n, k, g, false, &nodes[b.0].value, true, F::one(), buf);
                }
                if nodes[b.0].requires_grad {
                    let len = k * n;
                    let buf = grads[b.0].get_or_insert_with(|| vec![F::zero(); len]);
                    // dB = Aᵀ · dC
                    gemm(k, m, n, &nodes[a.0].value, true, g, false, F::one(), buf);
                }
            }
            Op::AddRow(x, bias) => {
                acc!(*x, |k| g[k]);
                let bias = *bias;
                if nodes[bias.0].requires_grad {
                    let buf = grads[bias.0].get_or_insert_with(|| vec![F::zero(); n]);
                    for row in g.chunks_exact(n.max(1)) {
                        for (b, &v) in buf.iter_mut().zip(row) {
                            *b = *b + v;
                        }
                    }
                }
            }
            Op::MulCol(x, w) => {
                let (x, w) = (*x, *w);
                let wv = &nodes[w.0].value;
                acc!(x, |k| g[k] * wv[k / n]);
                if nodes[w.0].requires_grad {
                    let xv = &nodes[x.0].value;
                    let buf = grads[w.0].get_or_insert_with(|| vec![F::zero(); m]);
                    for (r, b) in buf.iter_mut().enumerate() {
                        let mut s = F::zero();
                        for c in 0..n {
                            s = s + g[r * n + c] * xv[r * n + c];
                        }
                        *b = *b + s;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = nodes[p.0].shape.1;
                    acc!(p, |k| {
                        let (r, j) = (k / c, k % c);
                        g[r * n + start + j]
                    });
                    start += c;
                }
            }
            Op::SliceCols(x, start) => {
                let (x, start) = (*x, *start);
                let xn = nodes[x.0].shape.1;
                if nodes[x.0].requires_grad {
                    let len = nodes[x.0].value.len();
                    let buf = grads[x.0].get_or_insert_with(|| vec![F::zero(); len]);
                    for r in 0..m {
                        for j in 0..n {
                            let b = &mut buf[r * xn + start + j];
                            *b = *b + g[r * n + j];
                        }
                    }
                }
            }
            Op::Gather(x, rows) => {
                let x = *x;
                if nodes[x.0].requires_grad {
                    let len = nodes[x.0].value.len();
                    let buf = grads[x.0].get_or_insert_with(|| vec![F::zero(); len]);
                    for (o, &r) in rows.iter().enumerate() {
                        for j in 0..n {
                            let b = &mut buf[r * n + j];
                            *b = *b + g[o * n + j];
                        }
                    }
                }
            }
            Op::GroupSum(x, group) => {
                let group = *group;
                acc!(*x, |k| {
                    let (r, j) = (k / n, k % n);
                    g[(r / group) * n + j]
                });
            }
            Op::RowSum(x) => {
                let xn = nodes[x.0].shape.1;
                acc!(*x, |k| g[k / xn]);
            }
            Op::ExclusiveCumsum(x) => {
                let x = *x;
                if nodes[x.0].requires_grad {
                    let buf = grads[x.0].get_or_insert_with(|| vec![F::zero(); m * n]);
                    for r in 0..m {
                        // d x[j] = Σ_{s>j} g[s]
                        let mut tail = F::zero();
                        for j in (0..n).rev() {
                            let b = &mut buf[r * n + j];
                            *b = *b + tail;
                            tail = tail + g[r * n + j];
                        }
                    }
                }
            }
            Op::Sin(x) => {
                let xv = &nodes[x.0].value;
                acc!(*x, |k| g[k] * xv[k].cos());
            }
            Op::Cos(x) => {
                let xv = &nodes[x.0].value;
                acc!(*x, |k| -g[k] * xv[k].sin());
            }
            Op::Exp(x) => acc!(*x, |k| g[k] * out[k]),
            Op::Sigmoid(x) => acc!(*x, |k| g[k] * out[k] * (F::one() - out[k])),
            Op::Relu(x) => {
                let xv = &nodes[x.0].value;
                acc!(*x, |k| if xv[k] > F::zero() { g[k] } else { F::zero() });
            }
            Op::Softplus(x) => {
                let xv = &nodes[x.0].value;
                acc!(*x, |k| g[k] * sigmoid(xv[k]));
            }
            Op::Sqrt(x) => {
                let half = F::c(0.5);
                acc!(*x, |k| g[k] * half / out[k]);
            }
            Op::Square(x) => {
                let xv = &nodes[x.0].value;
                let two = F::c(2.0);
                acc!(*x, |k| g[k] * two * xv[k]);
            }
            Op::ClampMin(x, floor) => {
                let xv = &nodes[x.0].value;
                let floor = *floor;
                acc!(*x, |k| if xv[k] > floor { g[k] } else { F::zero() });
            }
            Op::Sum(x) => {
                let x = *x;
                let len = nodes[x.0].value.len();
                if nodes[x.0].requires_grad {
                    let buf = grads[x.0].get_or_insert_with(|| vec![F::zero(); len]);
                    buf.iter_mut().for_each(|b| *b = *b + g[0]);
                }
            }
            Op::Mean(x) => {
                let x = *x;
                let len = nodes[x.0].value.len();
                if nodes[x.0].requires_grad {
                    let s = g[0] / F::from_usize(len.max(1)).unwrap();
                    let buf = grads[x.0].get_or_insert_with(|| vec![F::zero(); len]);
                    buf.iter_mut().for_each(|b| *b = *b + s);
                }
            }
        }
    }
}

fn accumulate<F: Real>(
    nodes: &[Node<F>],
    grads: &mut [Option<Vec<F>>],
    target: Var,
    out_len: usize,
    bcast: bool,
    f: impl Fn(usize) -> F,
) {
    let t = &nodes[target.0];
    if !t.requires_grad {
        return;
    }
    let len = t.value.len();
    let buf = grads[target.0].get_or_insert_with(|| vec![F::zero(); len]);
    if bcast && len == 1 && out_len != 1 {
        let mut s = F::zero();
        for k in 0..out_len {
            s = s + f(k);
        }
        buf[0] = buf[0] + s;
    } else {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = *b + f(k);
        }
    }
}
