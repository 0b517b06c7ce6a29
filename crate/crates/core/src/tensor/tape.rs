use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use super::dense::{self, ReduceKind, Tensor};
use crate::error::{Error, Result};

/// Backward rule for an op defined outside the tensor core. Receives the
/// upstream gradient, the forward input values and the forward output, and
/// returns one gradient per input (shaped like that input).
pub trait CustomBackward {
    fn backward(&self, upstream: &Tensor, inputs: &[Arc<Tensor>], output: &Tensor) -> Vec<Tensor>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise minimum; ties route the gradient to the left operand.
    Min,
}

enum Op {
    Leaf,
    Binary(BinaryKind, usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Clamp(usize),
    Reduce(usize, usize, ReduceKind),
    SumAll(usize),
    Concat(Vec<usize>, usize),
    IndexSelect(usize, usize, Rc<[usize]>),
    SegmentSum(usize, usize, Rc<[usize]>),
    Reshape(usize),
    Affine(usize, usize, usize),
    Softmax(usize, usize),
    Relu(usize),
    Log(usize),
    Custom(Vec<usize>, Rc<dyn CustomBackward>),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Append-only record of primitive applications. Node ids are assigned in
/// creation order, which is a topological order of the graph.
#[derive(Clone)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// A tensor recorded on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &*self.value())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_as(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var {
            tape: self.clone(),
            id: nodes.len() - 1,
        }
    }

    /// Records a leaf. Gradients are reported for every leaf.
    pub fn leaf(&self, value: Tensor) -> Var {
        debug_assert!(value.all_finite(), "tape leaves must be finite");
        self.push(value, Op::Leaf)
    }

    /// Alias of [`Tape::leaf`] for values the caller treats as constants.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value)
    }

    fn check(&self, v: &Var) -> Result<usize> {
        if self.same_as(&v.tape) {
            Ok(v.id)
        } else {
            Err(Error::Detached)
        }
    }

    fn value_of(&self, id: usize) -> Arc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Concatenates along `axis`.
    pub fn concat(&self, parts: &[&Var], axis: usize) -> Result<Var> {
        let ids = parts.iter().map(|p| self.check(p)).collect::<Result<Vec<_>>>()?;
        let values: Vec<Arc<Tensor>> = ids.iter().map(|&i| self.value_of(i)).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = dense::concat(&refs, axis)?;
        Ok(self.push(out, Op::Concat(ids, axis)))
    }

    /// Records an op whose backward rule is supplied by the caller.
    pub fn custom(
        &self,
        inputs: &[&Var],
        output: Tensor,
        backward: Rc<dyn CustomBackward>,
    ) -> Result<Var> {
        let ids = inputs.iter().map(|p| self.check(p)).collect::<Result<Vec<_>>>()?;
        Ok(self.push(output, Op::Custom(ids, backward)))
    }

    /// Reverse pass from a scalar `loss`. Does not consume the tape, so
    /// repeated calls return identical gradients.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[root].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::ones(loss_value.shape()));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            for (input, gi) in input_grads(&nodes, node, &g) {
                accumulate(&mut grads[input], gi);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients {
            tape: self.clone(),
            grads,
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            let sum = dense::zip_broadcast("accumulate", acc, &g, |a, b| a + b)
                .expect("gradient shapes agree");
            *acc = sum;
        }
    }
}

fn input_grads(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| nodes[i].value.as_ref();
    let out = node.value.as_ref();
    match &node.op {
        Op::Leaf => vec![],
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let ae = dense::expand(av, g.shape()).expect("broadcast");
            let be = dense::expand(bv, g.shape()).expect("broadcast");
            let (ga, gb): (Vec<f64>, Vec<f64>) = g
                .data()
                .iter()
                .zip(ae.data().iter().zip(be.data()))
                .map(|(&g, (&x, &y))| match kind {
                    BinaryKind::Add => (g, g),
                    BinaryKind::Sub => (g, -g),
                    BinaryKind::Mul => (g * y, g * x),
                    BinaryKind::Div => (g / y, -g * x / (y * y)),
                    BinaryKind::Min => {
                        if x <= y {
                            (g, 0.0)
                        } else {
                            (0.0, g)
                        }
                    }
                })
                .unzip();
            let ga = Tensor::from_parts(g.shape().to_vec(), ga);
            let gb = Tensor::from_parts(g.shape().to_vec(), gb);
            vec![
                (*a, dense::reduce_to_shape(&ga, av.shape())),
                (*b, dense::reduce_to_shape(&gb, bv.shape())),
            ]
        }
        Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
        Op::Shift(x) | Op::Clamp(x) => vec![(*x, g.clone())],
        Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape()).expect("reshape"))],
        Op::SumAll(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()))],
        Op::Reduce(x, axis, kind) => {
            let xv = val(*x);
            let (outer, ext, inner) = dense::split_axis(xv.shape(), *axis);
            let mut gx = vec![0.0; xv.len()];
            let xd = xv.data();
            for o in 0..outer {
                for i in 0..inner {
                    let gv = g.data()[o * inner + i];
                    let at = |a: usize| (o * ext + a) * inner + i;
                    match kind {
                        ReduceKind::Sum => {
                            for a in 0..ext {
                                gx[at(a)] = gv;
                            }
                        }
                        ReduceKind::Max => {
                            let m = out.data()[o * inner + i];
                            if let Some(a) = (0..ext).find(|&a| xd[at(a)] == m) {
                                gx[at(a)] = gv;
                            }
                        }
                        ReduceKind::Prod => {
                            // leave-one-out products via prefix/suffix scans,
                            // exact in the presence of zeros
                            let mut prefix = 1.0;
                            for a in 0..ext {
                                gx[at(a)] = prefix;
                                prefix *= xd[at(a)];
                            }
                            let mut suffix = 1.0;
                            for a in (0..ext).rev() {
                                gx[at(a)] *= suffix * gv;
                                suffix *= xd[at(a)];
                            }
                        }
                    }
                }
            }
            vec![(*x, Tensor::from_parts(xv.shape().to_vec(), gx))]
        }
        Op::Concat(parts, axis) => {
            let mut offset = 0;
            parts
                .iter()
                .map(|&p| {
                    let ext = val(p).shape()[*axis];
                    let idx: Vec<usize> = (offset..offset + ext).collect();
                    offset += ext;
                    (p, dense::index_select(g, *axis, &idx).expect("slice"))
                })
                .collect()
        }
        Op::IndexSelect(x, axis, indices) => {
            let ext = val(*x).shape()[*axis];
            vec![(*x, dense::segment_sum(g, *axis, indices, ext).expect("scatter"))]
        }
        Op::SegmentSum(x, axis, segments) => {
            vec![(*x, dense::index_select(g, *axis, segments).expect("gather"))]
        }
        Op::Affine(x, w, bias) => {
            let (xv, wv) = (val(*x), val(*w));
            let (b, n, m) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
            let gx = dense::matmul(g.data(), false, wv.data(), true, b, m, n);
            let gw = dense::matmul(xv.data(), true, g.data(), false, n, b, m);
            let gb = dense::reduce_axis(g, 0, ReduceKind::Sum);
            vec![
                (*x, Tensor::from_parts(vec![b, n], gx)),
                (*w, Tensor::from_parts(vec![n, m], gw)),
                (*bias, gb),
            ]
        }
        Op::Softmax(x, axis) => {
            let (outer, ext, inner) = dense::split_axis(out.shape(), *axis);
            let (y, gd) = (out.data(), g.data());
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |a: usize| (o * ext + a) * inner + i;
                    let dot: f64 = (0..ext).map(|a| gd[at(a)] * y[at(a)]).sum();
                    for a in 0..ext {
                        gx[at(a)] = y[at(a)] * (gd[at(a)] - dot);
                    }
                }
            }
            vec![(*x, Tensor::from_parts(out.shape().to_vec(), gx))]
        }
        Op::Relu(x) => {
            let xv = val(*x);
            let gx = g
                .data()
                .iter()
                .zip(xv.data())
                .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                .collect();
            vec![(*x, Tensor::from_parts(xv.shape().to_vec(), gx))]
        }
        Op::Log(x) => {
            let xv = val(*x);
            let gx = g.data().iter().zip(xv.data()).map(|(g, x)| g / x).collect();
            vec![(*x, Tensor::from_parts(xv.shape().to_vec(), gx))]
        }
        Op::Custom(inputs, bw) => {
            let values: Vec<Arc<Tensor>> = inputs.iter().map(|&i| nodes[i].value.clone()).collect();
            let gs = bw.backward(g, &values, out);
            assert_eq!(gs.len(), inputs.len(), "custom backward arity");
            inputs.iter().copied().zip(gs).collect()
        }
    }
}

/// Gradients of one backward pass, indexed by variable.
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: &Var) -> Tensor {
        assert!(self.tape.same_as(&v.tape), "gradient lookup on a foreign tape");
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.value().shape()),
        }
    }

    pub fn reached(&self, v: &Var) -> bool {
        self.grads.get(v.id).is_some_and(|g| g.is_some())
    }
}

impl Var {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn other(&self, o: &Var) -> Result<usize> {
        self.tape.check(o)
    }

    pub fn binary(&self, kind: BinaryKind, other: &Var) -> Result<Var> {
        let b = self.other(other)?;
        let (x, y) = (self.value(), other.value());
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
            BinaryKind::Min => "min",
        };
        let out = match kind {
            BinaryKind::Add => dense::zip_broadcast(name, &x, &y, |a, b| a + b),
            BinaryKind::Sub => dense::zip_broadcast(name, &x, &y, |a, b| a - b),
            BinaryKind::Mul => dense::zip_broadcast(name, &x, &y, |a, b| a * b),
            BinaryKind::Div => dense::zip_broadcast(name, &x, &y, |a, b| a / b),
            BinaryKind::Min => dense::zip_broadcast(name, &x, &y, |a, b| if a <= b { a } else { b }),
        }?;
        Ok(self.tape.push(out, Op::Binary(kind, self.id, b)))
    }

    pub fn add(&self, o: &Var) -> Result<Var> {
        self.binary(BinaryKind::Add, o)
    }

    pub fn sub(&self, o: &Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, o)
    }

    pub fn mul(&self, o: &Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, o)
    }

    pub fn div(&self, o: &Var) -> Result<Var> {
        self.binary(BinaryKind::Div, o)
    }

    pub fn min(&self, o: &Var) -> Result<Var> {
        self.binary(BinaryKind::Min, o)
    }

    pub fn scale(&self, c: f64) -> Var {
        let out = self.value().map(|v| v * c);
        self.tape.push(out, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let out = self.value().map(|v| v + c);
        self.tape.push(out, Op::Shift(self.id))
    }

    /// Limits values to `[lo, hi]`. The backward rule passes the upstream
    /// gradient through unchanged, saturated coordinates included.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Var> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidArgument(format!("clamp bounds [{lo}, {hi}]")));
        }
        let out = self.value().map(|v| v.clamp(lo, hi));
        Ok(self.tape.push(out, Op::Clamp(self.id)))
    }

    pub fn reduce(&self, kind: ReduceKind, axis: usize) -> Result<Var> {
        let v = self.value();
        dense::check_axis("reduce", v.shape(), axis)?;
        let out = dense::reduce_axis(&v, axis, kind);
        Ok(self.tape.push(out, Op::Reduce(self.id, axis, kind)))
    }

    pub fn sum(&self, axis: usize) -> Result<Var> {
        self.reduce(ReduceKind::Sum, axis)
    }

    pub fn prod(&self, axis: usize) -> Result<Var> {
        self.reduce(ReduceKind::Prod, axis)
    }

    pub fn max(&self, axis: usize) -> Result<Var> {
        self.reduce(ReduceKind::Max, axis)
    }

    pub fn sum_all(&self) -> Var {
        let out = Tensor::scalar(self.value().sum_all());
        self.tape.push(out, Op::SumAll(self.id))
    }

    pub fn mean_all(&self) -> Var {
        let n = self.value().len().max(1) as f64;
        self.sum_all().scale(1.0 / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let out = self.value().reshape(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Gathers `indices` along `axis`; backward scatters into the selected
    /// slots and leaves zeros elsewhere.
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Var> {
        let out = dense::index_select(&self.value(), axis, indices)?;
        Ok(self.tape.push(out, Op::IndexSelect(self.id, axis, indices.into())))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Var> {
        self.index_select(0, rows)
    }

    /// Sums slices along `axis` into `segment_count` buckets.
    pub fn segment_sum(&self, axis: usize, segments: &[usize], segment_count: usize) -> Result<Var> {
        let out = dense::segment_sum(&self.value(), axis, segments, segment_count)?;
        Ok(self.tape.push(out, Op::SegmentSum(self.id, axis, segments.into())))
    }

    /// `self · w + bias` for `self` of shape (b, n), `w` (n, m), `bias` (m).
    pub fn affine(&self, w: &Var, bias: &Var) -> Result<Var> {
        let (wi, bi) = (self.other(w)?, self.other(bias)?);
        let (x, wv, bv) = (self.value(), w.value(), bias.value());
        let ok = x.rank() == 2
            && wv.rank() == 2
            && x.shape()[1] == wv.shape()[0]
            && bv.shape() == [wv.shape()[1]];
        if !ok {
            let rhs = if bv.rank() == 1 && wv.rank() == 2 && bv.shape()[0] != wv.shape()[1] {
                bv.shape().to_vec()
            } else {
                wv.shape().to_vec()
            };
            return Err(Error::ShapeMismatch {
                op: "affine",
                lhs: x.shape().to_vec(),
                rhs,
            });
        }
        let (b, n, m) = (x.shape()[0], x.shape()[1], wv.shape()[1]);
        let mut data = dense::matmul(x.data(), false, wv.data(), false, b, n, m);
        for row in data.chunks_mut(m.max(1)) {
            for (v, c) in row.iter_mut().zip(bv.data()) {
                *v += c;
            }
        }
        Ok(self
            .tape
            .push(Tensor::from_parts(vec![b, m], data), Op::Affine(self.id, wi, bi)))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var> {
        let x = self.value();
        dense::check_axis("softmax", x.shape(), axis)?;
        let (outer, ext, inner) = dense::split_axis(x.shape(), axis);
        let xd = x.data();
        let mut y = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * ext + a) * inner + i;
                let m = (0..ext).map(|a| xd[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for a in 0..ext {
                    let e = (xd[at(a)] - m).exp();
                    y[at(a)] = e;
                    z += e;
                }
                for a in 0..ext {
                    y[at(a)] /= z;
                }
            }
        }
        Ok(self
            .tape
            .push(Tensor::from_parts(x.shape().to_vec(), y), Op::Softmax(self.id, axis)))
    }

    pub fn relu(&self) -> Var {
        let out = self.value().map(|v| v.max(0.0));
        self.tape.push(out, Op::Relu(self.id))
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&self) -> Result<Var> {
        let x = self.value();
        if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let out = x.map(f64::ln);
        Ok(self.tape.push(out, Op::Log(self.id)))
    }
}
