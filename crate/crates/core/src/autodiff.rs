//! Define-by-run reverse-mode differentiation.
//!
//! Every operation on a [`Var`] evaluates eagerly and appends a node to its
//! [`Tape`]. Nodes are only ever appended, so a node's inputs always precede
//! it and [`Tape::backward`] is a single reverse sweep in index order.
//!
//! Forward operations refuse to produce non-finite values: any NaN or
//! infinity is reported as [`Error::Numeric`] at the operation that created
//! it.

use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

/// Position of a node on its tape.
pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    Add { a: NodeId, b: NodeId },
    AddRow { a: NodeId, row: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: f64 },
    Log { a: NodeId },
    Exp { a: NodeId },
    Relu { a: NodeId },
    Clamp { a: NodeId, lo: f64, hi: f64 },
    Softmax { a: NodeId, temperature: f64 },
    LogSoftmax { a: NodeId, temperature: f64 },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
    SumAxis { a: NodeId, axis: usize },
    MeanAxis { a: NodeId, axis: usize },
    Pick { a: NodeId, index: Vec<usize> },
    SelectRows { a: NodeId, rows: Vec<usize> },
    Concat { parts: Vec<NodeId>, axis: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// An append-only record of evaluated operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

/// Gradients of one scalar with respect to every node on a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if the loss does not depend on it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn get_by_id(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

fn check_finite(t: &Tensor, op: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{} produced a non-finite value", op)))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input value. Leaves are where gradients accumulate.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op: Op::Leaf });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, name: &str) -> Result<Var<'_>> {
        check_finite(&value, name)?;
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn value_ref(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse sweep from `loss`, which must be a one-element value on this
    /// tape. Accumulation runs in reverse node order, so repeated calls give
    /// bit-identical results.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::contract("loss is not recorded on this tape"));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), 1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            propagate(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

/// Splits a shape around `axis` into `(outer, axis_len, inner)`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |id: NodeId| &nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            // dA = G·Bᵀ, dB = Aᵀ·G
            let bt = val(*b).transpose().expect("matmul operand is a matrix");
            let da = matmul_raw(g.data(), bt.data(), m, n, k);
            let at = val(*a).transpose().expect("matmul operand is a matrix");
            let db = matmul_raw(at.data(), g.data(), k, m, n);
            accumulate(grads, *a, Tensor::new(vec![m, k], da).unwrap());
            accumulate(grads, *b, Tensor::new(vec![k, n], db).unwrap());
        }
        Op::Add { a, b } => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.clone());
        }
        Op::AddRow { a, row } => {
            accumulate(grads, *a, g.clone());
            let cols = g.last_dim();
            let mut dr = vec![0.0; cols];
            for chunk in g.data().chunks(cols) {
                for (d, v) in dr.iter_mut().zip(chunk) {
                    *d += v;
                }
            }
            let shape = val(*row).shape().to_vec();
            accumulate(grads, *row, Tensor::new(shape, dr).unwrap());
        }
        Op::Sub { a, b } => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.map(|v| -v));
        }
        Op::Mul { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let da = zip_with(g, bv, |gi, bi| gi * bi);
            let db = zip_with(g, av, |gi, ai| gi * ai);
            accumulate(grads, *a, da);
            accumulate(grads, *b, db);
        }
        Op::Scale { a, factor } => {
            let f = *factor;
            accumulate(grads, *a, g.map(|v| v * f));
        }
        Op::Log { a } => {
            accumulate(grads, *a, zip_with(g, val(*a), |gi, x| gi / x));
        }
        Op::Exp { a } => {
            accumulate(grads, *a, zip_with(g, &node.value, |gi, y| gi * y));
        }
        Op::Relu { a } => {
            accumulate(
                grads,
                *a,
                zip_with(g, val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 }),
            );
        }
        Op::Clamp { a, lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            accumulate(
                grads,
                *a,
                zip_with(g, val(*a), |gi, x| if x >= lo && x <= hi { gi } else { 0.0 }),
            );
        }
        Op::Softmax { a, temperature } => {
            let y = &node.value;
            let cols = y.last_dim();
            let mut dx = vec![0.0; y.len()];
            for ((dxr, yr), gr) in dx
                .chunks_mut(cols)
                .zip(y.data().chunks(cols))
                .zip(g.data().chunks(cols))
            {
                let dot: f64 = yr.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                for j in 0..cols {
                    dxr[j] = yr[j] * (gr[j] - dot) / temperature;
                }
            }
            accumulate(grads, *a, Tensor::new(y.shape().to_vec(), dx).unwrap());
        }
        Op::LogSoftmax { a, temperature } => {
            let y = &node.value;
            let cols = y.last_dim();
            let mut dx = vec![0.0; y.len()];
            for ((dxr, yr), gr) in dx
                .chunks_mut(cols)
                .zip(y.data().chunks(cols))
                .zip(g.data().chunks(cols))
            {
                let gsum: f64 = gr.iter().sum();
                for j in 0..cols {
                    dxr[j] = (gr[j] - yr[j].exp() * gsum) / temperature;
                }
            }
            accumulate(grads, *a, Tensor::new(y.shape().to_vec(), dx).unwrap());
        }
        Op::SumAll { a } => {
            let gv = g.data()[0];
            accumulate(grads, *a, Tensor::full(val(*a).shape(), gv));
        }
        Op::MeanAll { a } => {
            let src = val(*a);
            let gv = g.data()[0] / src.len() as f64;
            accumulate(grads, *a, Tensor::full(src.shape(), gv));
        }
        Op::SumAxis { a, axis } | Op::MeanAxis { a, axis } => {
            let src = val(*a);
            let (outer, len, inner) = axis_split(src.shape(), *axis);
            let scale = if matches!(node.op, Op::MeanAxis { .. }) {
                1.0 / len as f64
            } else {
                1.0
            };
            let mut dx = vec![0.0; src.len()];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        dx[(o * len + l) * inner + i] = g.data()[o * inner + i] * scale;
                    }
                }
            }
            accumulate(grads, *a, Tensor::new(src.shape().to_vec(), dx).unwrap());
        }
        Op::Pick { a, index } => {
            let src = val(*a);
            let cols = src.last_dim();
            let mut dx = vec![0.0; src.len()];
            for (row, &j) in index.iter().enumerate() {
                dx[row * cols + j] = g.data()[row];
            }
            accumulate(grads, *a, Tensor::new(src.shape().to_vec(), dx).unwrap());
        }
        Op::SelectRows { a, rows } => {
            let src = val(*a);
            let width = src.len() / src.shape()[0].max(1);
            let mut dx = vec![0.0; src.len()];
            for (out_row, &r) in rows.iter().enumerate() {
                let gr = &g.data()[out_row * width..(out_row + 1) * width];
                for (d, v) in dx[r * width..(r + 1) * width].iter_mut().zip(gr) {
                    *d += v;
                }
            }
            accumulate(grads, *a, Tensor::new(src.shape().to_vec(), dx).unwrap());
        }
        Op::Concat { parts, axis } => {
            let out_shape = g.shape();
            let (outer, total, inner) = axis_split(out_shape, *axis);
            let mut offset = 0;
            for &p in parts {
                let ps = val(p).shape().to_vec();
                let len = ps[*axis];
                let mut dx = Vec::with_capacity(val(p).len());
                for o in 0..outer {
                    let start = (o * total + offset) * inner;
                    dx.extend_from_slice(&g.data()[start..start + len * inner]);
                }
                accumulate(grads, p, Tensor::new(ps, dx).unwrap());
                offset += len;
            }
        }
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{}: shapes {:?} and {:?} differ",
            op,
            a.shape(),
            b.shape()
        )))
    }
}

fn check_tape(a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    if std::ptr::eq(a.tape, b.tape) {
        Ok(())
    } else {
        Err(Error::contract("operands live on different tapes"))
    }
}

/// Row-wise log-sum-exp of `x / temperature` over the trailing axis.
fn row_logsumexp(row: &[f64], temperature: f64) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / temperature));
    let sum: f64 = row.iter().map(|&v| (v / temperature - max).exp()).sum();
    max + sum.ln()
}

fn check_temperature(temperature: f64) -> Result<()> {
    if temperature > 0.0 && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "temperature must be positive, got {}",
            temperature
        )))
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrowed view of the forward value.
    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value_ref(self.id)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn scalar_value(&self) -> Result<f64> {
        self.value().to_scalar()
    }

    /// A fresh leaf holding the same value; gradients stop here.
    pub fn detach(&self) -> Var<'t> {
        self.tape.leaf(self.to_tensor())
    }

    pub fn matmul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        check_tape(self, &rhs)?;
        let (out, m, k, n) = {
            let (a, b) = (self.value(), rhs.value());
            let (m, k) = a.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(Error::shape(format!(
                    "matmul inner dimensions differ: {:?} · {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            (matmul_raw(a.data(), b.data(), m, k, n), m, k, n)
        };
        let value = Tensor::new(vec![m, n], out)?;
        self.tape.push(
            value,
            Op::MatMul {
                a: self.id,
                b: rhs.id,
                m,
                k,
                n,
            },
            "matmul",
        )
    }

    fn binary(&self, rhs: Var<'t>, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        check_tape(self, &rhs)?;
        let (a, b) = (self.value(), rhs.value());
        same_shape(&a, &b, name)?;
        Ok(zip_with(&a, &b, f))
    }

    pub fn add(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.binary(rhs, "add", |x, y| x + y)?;
        self.tape.push(v, Op::Add { a: self.id, b: rhs.id }, "add")
    }

    pub fn sub(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.binary(rhs, "sub", |x, y| x - y)?;
        self.tape.push(v, Op::Sub { a: self.id, b: rhs.id }, "sub")
    }

    pub fn mul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        let v = self.binary(rhs, "mul", |x, y| x * y)?;
        self.tape.push(v, Op::Mul { a: self.id, b: rhs.id }, "mul")
    }

    /// Adds a `[1×n]` (or `[n]`) row to every row of a `[…×n]` value.
    pub fn add_row(&self, row: Var<'t>) -> Result<Var<'t>> {
        check_tape(self, &row)?;
        let value = {
            let (a, r) = (self.value(), row.value());
            let cols = a.last_dim();
            if r.len() != cols || a.rank() == 0 {
                return Err(Error::shape(format!(
                    "cannot broadcast row {:?} over {:?}",
                    r.shape(),
                    a.shape()
                )));
            }
            let mut data = a.data().to_vec();
            for chunk in data.chunks_mut(cols) {
                for (d, b) in chunk.iter_mut().zip(r.data()) {
                    *d += b;
                }
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        self.tape.push(value, Op::AddRow { a: self.id, row: row.id }, "add_row")
    }

    pub fn scale(&self, factor: f64) -> Result<Var<'t>> {
        let v = self.value().map(|x| x * factor);
        self.tape.push(v, Op::Scale { a: self.id, factor }, "scale")
    }

    pub fn neg(&self) -> Result<Var<'t>> {
        self.scale(-1.0)
    }

    pub fn log(&self) -> Result<Var<'t>> {
        let v = self.value().map(f64::ln);
        self.tape.push(v, Op::Log { a: self.id }, "log")
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        let v = self.value().map(f64::exp);
        self.tape.push(v, Op::Exp { a: self.id }, "exp")
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        let v = self.value().map(|x| if x > 0.0 { x } else { 0.0 });
        self.tape.push(v, Op::Relu { a: self.id }, "relu")
    }

    /// Elementwise clamp into `[lo, hi]`; clamped entries pass no gradient.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Var<'t>> {
        let v = self.value().map(|x| x.clamp(lo, hi));
        self.tape.push(v, Op::Clamp { a: self.id, lo, hi }, "clamp")
    }

    /// Softmax of `x / temperature` over the trailing axis, computed after
    /// subtracting the row maximum.
    pub fn softmax(&self, temperature: f64) -> Result<Var<'t>> {
        check_temperature(temperature)?;
        let value = {
            let x = self.value();
            check_finite(&x, "softmax input")?;
            let cols = x.last_dim();
            if cols == 0 {
                return Err(Error::shape("softmax over an empty axis"));
            }
            let mut data = Vec::with_capacity(x.len());
            for row in x.data().chunks(cols) {
                let lse = row_logsumexp(row, temperature);
                data.extend(row.iter().map(|&v| (v / temperature - lse).exp()));
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        self.tape.push(
            value,
            Op::Softmax {
                a: self.id,
                temperature,
            },
            "softmax",
        )
    }

    /// `log(softmax(x / temperature))` without forming the probabilities.
    pub fn log_softmax(&self, temperature: f64) -> Result<Var<'t>> {
        check_temperature(temperature)?;
        let value = {
            let x = self.value();
            check_finite(&x, "log_softmax input")?;
            let cols = x.last_dim();
            if cols == 0 {
                return Err(Error::shape("log_softmax over an empty axis"));
            }
            let mut data = Vec::with_capacity(x.len());
            for row in x.data().chunks(cols) {
                let lse = row_logsumexp(row, temperature);
                data.extend(row.iter().map(|&v| v / temperature - lse));
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        self.tape.push(
            value,
            Op::LogSoftmax {
                a: self.id,
                temperature,
            },
            "log_softmax",
        )
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        let s: f64 = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::SumAll { a: self.id }, "sum")
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let s = {
            let v = self.value();
            if v.is_empty() {
                return Err(Error::shape("mean of an empty tensor"));
            }
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        self.tape.push(Tensor::scalar(s), Op::MeanAll { a: self.id }, "mean")
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            if axis >= x.rank() {
                return Err(Error::shape(format!(
                    "axis {} out of range for shape {:?}",
                    axis,
                    x.shape()
                )));
            }
            let (outer, len, inner) = axis_split(x.shape(), axis);
            if mean && len == 0 {
                return Err(Error::shape("mean over an empty axis"));
            }
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        out[o * inner + i] += x.data()[(o * len + l) * inner + i];
                    }
                }
            }
            if mean {
                for v in &mut out {
                    *v /= len as f64;
                }
            }
            let mut shape = x.shape().to_vec();
            shape.remove(axis);
            Tensor::new(shape, out)?
        };
        let op = if mean {
            Op::MeanAxis { a: self.id, axis }
        } else {
            Op::SumAxis { a: self.id, axis }
        };
        self.tape.push(value, op, "reduce_axis")
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.reduce_axis(axis, true)
    }

    /// `out[r] = x[r, index[r]]` for a `[R×C]` value.
    pub fn pick(&self, index: &[usize]) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            let (rows, cols) = x.dims2()?;
            if index.len() != rows {
                return Err(Error::shape(format!(
                    "pick needs {} indices, got {}",
                    rows,
                    index.len()
                )));
            }
            let mut out = Vec::with_capacity(rows);
            for (r, &j) in index.iter().enumerate() {
                if j >= cols {
                    return Err(Error::shape(format!("index {} out of range for {} columns", j, cols)));
                }
                out.push(x.data()[r * cols + j]);
            }
            Tensor::vector(out)
        };
        self.tape.push(
            value,
            Op::Pick {
                a: self.id,
                index: index.to_vec(),
            },
            "pick",
        )
    }

    /// Gathers rows along the leading axis. Repeated rows are allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            if x.rank() == 0 {
                return Err(Error::shape("select_rows on a scalar"));
            }
            let n = x.shape()[0];
            let width = x.len().checked_div(n).unwrap_or(0);
            let mut data = Vec::with_capacity(rows.len() * width);
            for &r in rows {
                if r >= n {
                    return Err(Error::shape(format!("row {} out of range for {} rows", r, n)));
                }
                data.extend_from_slice(&x.data()[r * width..(r + 1) * width]);
            }
            let mut shape = x.shape().to_vec();
            shape[0] = rows.len();
            Tensor::new(shape, data)?
        };
        self.tape.push(
            value,
            Op::SelectRows {
                a: self.id,
                rows: rows.to_vec(),
            },
            "select_rows",
        )
    }

    /// Concatenates values that agree on every axis except `axis`.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let tape = first.tape;
        let value = {
            let values: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
            let base = values[0].shape().to_vec();
            if axis >= base.len() {
                return Err(Error::shape(format!("axis {} out of range for {:?}", axis, base)));
            }
            let mut total = 0;
            for (p, v) in parts.iter().zip(&values) {
                check_tape(first, p)?;
                let s = v.shape();
                let compatible = s.len() == base.len()
                    && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
                if !compatible {
                    return Err(Error::shape(format!(
                        "concat: {:?} incompatible with {:?} along axis {}",
                        s, base, axis
                    )));
                }
                total += s[axis];
            }
            let (outer, _, inner) = axis_split(&base, axis);
            let mut data = Vec::new();
            for o in 0..outer {
                for v in &values {
                    let len = v.shape()[axis] * inner;
                    data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
                }
            }
            let mut shape = base;
            shape[axis] = total;
            Tensor::new(shape, data)?
        };
        tape.push(
            value,
            Op::Concat {
                parts: parts.iter().map(|p| p.id).collect(),
                axis,
            },
            "concat",
        )
    }
}
