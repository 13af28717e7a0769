//! Computation record and reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Every node holds its forward
//! value, so the append order is already a topological order and the backward
//! sweep simply walks the list in reverse.

use std::collections::HashMap;

use crate::error::{DiffError, Result};
use crate::real::Real;
use crate::store::ParamStore;
use crate::tensor::{axis_split, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds understood by [`Graph::forward_op`].
///
/// Elementwise binary ops broadcast only when one operand's shape is a
/// trailing suffix of the other's (leading-batch broadcasting).
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `[.., n, k] x [k, p]` or batched `[b, n, k] x [b, k, p]`.
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    SumAxis(usize),
    MaxAxis(usize),
    MeanAxis(usize),
    Sigmoid,
    Tanh,
    Relu,
    SoftmaxAxis(usize),
    LogSoftmaxAxis(usize),
    Log,
    Square,
    /// Inputs `(mask, on_true, on_false)`; the mask receives no gradient.
    SelectByMask,
    Reshape(Vec<usize>),
    /// Inserts a new axis of size `count` at `axis`, tiling the input.
    RepeatAxis { axis: usize, count: usize },
    Permute(Vec<usize>),
    /// Gathers rows of the input viewed as `[rows, last_dim]`.
    GatherRows(Vec<usize>),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::SumAxis(_) => "sum-over-axis",
            OpKind::MaxAxis(_) => "max-over-axis",
            OpKind::MeanAxis(_) => "mean-over-axis",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::SoftmaxAxis(_) => "softmax-over-axis",
            OpKind::LogSoftmaxAxis(_) => "log-softmax-over-axis",
            OpKind::Log => "log",
            OpKind::Square => "square",
            OpKind::SelectByMask => "select-by-mask",
            OpKind::Reshape(_) => "reshape",
            OpKind::RepeatAxis { .. } => "repeat-axis",
            OpKind::Permute(_) => "permute",
            OpKind::GatherRows(_) => "gather-rows",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            OpKind::Concat { .. } => None,
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul => Some(2),
            OpKind::SelectByMask => Some(3),
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Input,
    Param,
    Op(OpKind),
}

#[derive(Debug, Clone)]
struct Node<R> {
    kind: NodeKind,
    inputs: Vec<Var>,
    value: Tensor<R>,
    /// Winning index along the reduced axis, for max-over-axis.
    argmax: Vec<usize>,
}

/// Per-node gradients produced by [`Graph::gradients`].
#[derive(Debug)]
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn get(&self, var: Var) -> Option<&[R]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph<R> {
    nodes: Vec<Node<R>>,
    params: HashMap<String, Var>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> DiffError {
    DiffError::InvalidArgument {
        op,
        msg: msg.into(),
    }
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.ends_with(b) {
        Ok(a.to_vec())
    } else if b.ends_with(a) {
        Ok(b.to_vec())
    } else {
        Err(shape_err(op, a, b))
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(invalid(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

fn without_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

/// Output position -> input offset for a permutation of axes.
fn permute_map(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let numel: usize = shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..numel {
        map.push(offset);
        for d in (0..rank).rev() {
            idx[d] += 1;
            offset += out_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= out_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    map
}

fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

fn add_into<R: Real>(dst: &mut Option<Vec<R>>, numel: usize) -> &mut Vec<R> {
    dst.get_or_insert_with(|| vec![R::zero(); numel])
}

impl<R: Real> Graph<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of values held by the record outside parameter leaves (its peak
    /// activation count, since nothing is freed before the record is dropped).
    pub fn activation_count(&self) -> usize {
        self.nodes.iter().filter(|n| !matches!(n.kind, NodeKind::Param)).map(|n| n.value.numel()).sum()
    }

    pub fn value(&self, var: Var) -> &Tensor<R> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Records a constant leaf. Constants never receive gradients.
    pub fn input(&mut self, value: Tensor<R>) -> Var {
        self.push(NodeKind::Input, Vec::new(), value, Vec::new())
    }

    /// Records a parameter leaf, reusing the node if `name` was already bound.
    pub fn param(&mut self, store: &ParamStore<R>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .value(name)
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.push(NodeKind::Param, Vec::new(), value, Vec::new());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<Var>, value: Tensor<R>, argmax: Vec<usize>) -> Var {
        self.nodes.push(Node {
            kind,
            inputs,
            value,
            argmax,
        });
        Var(self.nodes.len() - 1)
    }

    /// Applies `kind` to `inputs`, records the result and returns its handle.
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let name = kind.name();
        if let Some(arity) = kind.arity() {
            if inputs.len() != arity {
                return Err(invalid(name, format!("expected {arity} inputs, got {}", inputs.len())));
            }
        } else if inputs.is_empty() {
            return Err(invalid(name, "expected at least one input"));
        }
        if let Some(v) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(invalid(name, format!("unknown node {}", v.0)));
        }
        let (value, argmax) = self.compute(&kind, inputs)?;
        if !value.is_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        Ok(self.push(NodeKind::Op(kind), inputs.to_vec(), value, argmax))
    }

    fn compute(&self, kind: &OpKind, inputs: &[Var]) -> Result<(Tensor<R>, Vec<usize>)> {
        let name = kind.name();
        let a = &self.nodes[inputs[0].0].value;
        let out = match kind {
            OpKind::MatMul => {
                let b = &self.nodes[inputs[1].0].value;
                let (sa, sb) = (a.shape(), b.shape());
                if sa.len() < 2 {
                    return Err(shape_err(name, sa, sb));
                }
                let k = sa[sa.len() - 1];
                match sb.len() {
                    2 => {
                        if sb[0] != k {
                            return Err(shape_err(name, sa, sb));
                        }
                        let p = sb[1];
                        let rows: usize = sa[..sa.len() - 1].iter().product();
                        let mut shape = sa[..sa.len() - 1].to_vec();
                        shape.push(p);
                        let mut out = vec![R::zero(); rows * p];
                        R::gemm(rows, k, p, a.data(), (k as isize, 1), b.data(), (p as isize, 1), &mut out, (p as isize, 1), false);
                        Tensor::new(shape, out)?
                    }
                    3 => {
                        if sa.len() != 3 || sa[0] != sb[0] || sb[1] != k {
                            return Err(shape_err(name, sa, sb));
                        }
                        let (bt, n, p) = (sa[0], sa[1], sb[2]);
                        let mut out = vec![R::zero(); bt * n * p];
                        for i in 0..bt {
                            R::gemm(
                                n,
                                k,
                                p,
                                &a.data()[i * n * k..(i + 1) * n * k],
                                (k as isize, 1),
                                &b.data()[i * k * p..(i + 1) * k * p],
                                (p as isize, 1),
                                &mut out[i * n * p..(i + 1) * n * p],
                                (p as isize, 1),
                                false,
                            );
                        }
                        Tensor::new(vec![bt, n, p], out)?
                    }
                    _ => return Err(shape_err(name, sa, sb)),
                }
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let b = &self.nodes[inputs[1].0].value;
                let shape = broadcast_shape(name, a.shape(), b.shape())?;
                let numel: usize = shape.iter().product();
                let (da, db) = (a.data(), b.data());
                let (na, nb) = (da.len(), db.len());
                let f: fn(R, R) -> R = match kind {
                    OpKind::Add => |x, y| x + y,
                    OpKind::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let mut out = Vec::with_capacity(numel);
                if na == nb {
                    out.extend(da.iter().zip(db).map(|(&x, &y)| f(x, y)));
                } else if nb < na {
                    for chunk in da.chunks(nb.max(1)) {
                        out.extend(chunk.iter().zip(db).map(|(&x, &y)| f(x, y)));
                    }
                } else {
                    for chunk in db.chunks(na.max(1)) {
                        out.extend(da.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
                    }
                }
                Tensor::new(shape, out)?
            }
            OpKind::Scale(c) => {
                let c = R::of(*c);
                Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| x * c).collect())?
            }
            OpKind::Concat { axis } => {
                let axis = *axis;
                let first = a.shape();
                check_axis(name, first, axis)?;
                let mut total = 0;
                for v in inputs {
                    let s = self.nodes[v.0].value.shape();
                    if s.len() != first.len()
                        || s[..axis] != first[..axis]
                        || s[axis + 1..] != first[axis + 1..]
                    {
                        return Err(shape_err(name, first, s));
                    }
                    total += s[axis];
                }
                let mut shape = first.to_vec();
                shape[axis] = total;
                let (outer, _, inner) = axis_split(&shape, axis);
                let mut out = Vec::with_capacity(shape.iter().product());
                for o in 0..outer {
                    for v in inputs {
                        let t = &self.nodes[v.0].value;
                        let block = t.shape()[axis] * inner;
                        out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
                    }
                }
                Tensor::new(shape, out)?
            }
            OpKind::Slice { axis, start, end } => {
                let (axis, start, end) = (*axis, *start, *end);
                check_axis(name, a.shape(), axis)?;
                if start > end || end > a.shape()[axis] {
                    return Err(invalid(name, format!("range {start}..{end} out of bounds for {:?}", a.shape())));
                }
                let (outer, len, inner) = axis_split(a.shape(), axis);
                let mut shape = a.shape().to_vec();
                shape[axis] = end - start;
                let mut out = Vec::with_capacity(outer * (end - start) * inner);
                for o in 0..outer {
                    let base = o * len * inner;
                    out.extend_from_slice(&a.data()[base + start * inner..base + end * inner]);
                }
                Tensor::new(shape, out)?
            }
            OpKind::SumAxis(axis) | OpKind::MeanAxis(axis) => {
                check_axis(name, a.shape(), *axis)?;
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                if matches!(kind, OpKind::MeanAxis(_)) && len == 0 {
                    return Err(invalid(name, "mean over an empty axis"));
                }
                let mut out = vec![R::zero(); outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let src = &a.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
                if matches!(kind, OpKind::MeanAxis(_)) {
                    let inv = R::one() / R::of(len as f64);
                    out.iter_mut().for_each(|x| *x = *x * inv);
                }
                Tensor::new(without_axis(a.shape(), *axis), out)?
            }
            OpKind::MaxAxis(axis) => {
                check_axis(name, a.shape(), *axis)?;
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                if len == 0 {
                    return Err(invalid(name, "max over an empty axis"));
                }
                let mut out = Vec::with_capacity(outer * inner);
                let mut arg = Vec::with_capacity(outer * inner);
                for o in 0..outer {
                    for j in 0..inner {
                        let mut best = a.data()[o * len * inner + j];
                        let mut best_l = 0;
                        for l in 1..len {
                            let x = a.data()[(o * len + l) * inner + j];
                            // strict comparison keeps the lowest index on ties
                            if x > best {
                                best = x;
                                best_l = l;
                            }
                        }
                        out.push(best);
                        arg.push(best_l);
                    }
                }
                return Ok((Tensor::new(without_axis(a.shape(), *axis), out)?, arg));
            }
            OpKind::Sigmoid => map(a, sigmoid),
            OpKind::Tanh => map(a, |x| x.tanh()),
            OpKind::Relu => map(a, |x| if x > R::zero() { x } else { R::zero() }),
            OpKind::Log => {
                if a.data().iter().any(|&x| x <= R::zero()) {
                    return Err(DiffError::NonFinite { op: name });
                }
                map(a, |x| x.ln())
            }
            OpKind::Square => map(a, |x| x * x),
            OpKind::SoftmaxAxis(axis) | OpKind::LogSoftmaxAxis(axis) => {
                check_axis(name, a.shape(), *axis)?;
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                let log = matches!(kind, OpKind::LogSoftmaxAxis(_));
                let mut out = a.data().to_vec();
                for o in 0..outer {
                    for j in 0..inner {
                        let idx = |l: usize| (o * len + l) * inner + j;
                        let m = (0..len).map(|l| out[idx(l)]).fold(R::neg_infinity(), R::max);
                        let mut z = R::zero();
                        for l in 0..len {
                            z = z + (out[idx(l)] - m).exp();
                        }
                        let lz = z.ln();
                        for l in 0..len {
                            let shifted = out[idx(l)] - m;
                            out[idx(l)] = if log { shifted - lz } else { shifted.exp() / z };
                        }
                    }
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::SelectByMask => {
                let (t, f) = (&self.nodes[inputs[1].0].value, &self.nodes[inputs[2].0].value);
                if a.shape() != t.shape() || t.shape() != f.shape() {
                    return Err(shape_err(name, a.shape(), t.shape()));
                }
                let out = a
                    .data()
                    .iter()
                    .zip(t.data().iter().zip(f.data()))
                    .map(|(&m, (&x, &y))| if m != R::zero() { x } else { y })
                    .collect();
                Tensor::new(a.shape().to_vec(), out)?
            }
            OpKind::Reshape(shape) => a.clone().reshaped(shape.clone())?,
            OpKind::RepeatAxis { axis, count } => {
                let (axis, count) = (*axis, *count);
                if axis > a.rank() {
                    return Err(invalid(name, format!("axis {axis} out of range for {:?}", a.shape())));
                }
                let outer: usize = a.shape()[..axis].iter().product();
                let inner: usize = a.shape()[axis..].iter().product();
                let mut shape = a.shape().to_vec();
                shape.insert(axis, count);
                let mut out = Vec::with_capacity(outer * count * inner);
                for o in 0..outer {
                    let block = &a.data()[o * inner..(o + 1) * inner];
                    for _ in 0..count {
                        out.extend_from_slice(block);
                    }
                }
                Tensor::new(shape, out)?
            }
            OpKind::Permute(perm) => {
                let mut seen = vec![false; a.rank()];
                if perm.len() != a.rank() || perm.iter().any(|&p| p >= a.rank() || std::mem::replace(&mut seen[p], true)) {
                    return Err(invalid(name, format!("{perm:?} is not a permutation of rank {}", a.rank())));
                }
                let shape = perm.iter().map(|&p| a.shape()[p]).collect();
                let out = permute_map(a.shape(), perm).into_iter().map(|o| a.data()[o]).collect();
                Tensor::new(shape, out)?
            }
            OpKind::GatherRows(rows) => {
                if a.rank() == 0 {
                    return Err(invalid(name, "cannot gather rows of a scalar"));
                }
                let cols = a.shape()[a.rank() - 1];
                let nrows = a.numel().checked_div(cols).unwrap_or(0);
                let mut out = Vec::with_capacity(rows.len() * cols);
                for &r in rows {
                    if r >= nrows {
                        return Err(invalid(name, format!("row {r} out of range ({nrows} rows)")));
                    }
                    out.extend_from_slice(&a.data()[r * cols..(r + 1) * cols]);
                }
                Tensor::new(vec![rows.len(), cols], out)?
            }
        };
        Ok((out, Vec::new()))
    }

    /// Reverse sweep from a scalar `loss`; returns gradients of every node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<R>> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(DiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<R>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![R::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let NodeKind::Op(kind) = &self.nodes[i].kind {
                self.backward_node(i, kind, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Accumulates `d loss / d param` into the gradient slots of `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<R>) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (name, &v) in &self.params {
            if let Some(g) = grads.get(v) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, kind: &OpKind, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let node = &self.nodes[i];
        let ins = &node.inputs;
        let a = &self.nodes[ins[0].0].value;
        let na = a.numel();
        let y = node.value.data();
        match kind {
            OpKind::MatMul => {
                let b = &self.nodes[ins[1].0].value;
                let (sa, sb) = (a.shape(), b.shape());
                let k = sa[sa.len() - 1];
                if sb.len() == 2 {
                    let p = sb[1];
                    let rows: usize = sa[..sa.len() - 1].iter().product();
                    let ga = add_into(&mut grads[ins[0].0], na);
                    R::gemm(rows, p, k, g, (p as isize, 1), b.data(), (1, p as isize), ga, (k as isize, 1), true);
                    let gb = add_into(&mut grads[ins[1].0], b.numel());
                    R::gemm(k, rows, p, a.data(), (1, k as isize), g, (p as isize, 1), gb, (p as isize, 1), true);
                } else {
                    let (bt, n, p) = (sa[0], sa[1], sb[2]);
                    for t in 0..bt {
                        let gs = &g[t * n * p..(t + 1) * n * p];
                        let ga = add_into(&mut grads[ins[0].0], na);
                        R::gemm(
                            n,
                            p,
                            k,
                            gs,
                            (p as isize, 1),
                            &b.data()[t * k * p..(t + 1) * k * p],
                            (1, p as isize),
                            &mut ga[t * n * k..(t + 1) * n * k],
                            (k as isize, 1),
                            true,
                        );
                        let gb = add_into(&mut grads[ins[1].0], b.numel());
                        R::gemm(
                            k,
                            n,
                            p,
                            &a.data()[t * n * k..(t + 1) * n * k],
                            (1, k as isize),
                            gs,
                            (p as isize, 1),
                            &mut gb[t * k * p..(t + 1) * k * p],
                            (p as isize, 1),
                            true,
                        );
                    }
                }
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let b = &self.nodes[ins[1].0].value;
                let nb = b.numel();
                let sign = if matches!(kind, OpKind::Sub) { -R::one() } else { R::one() };
                let is_mul = matches!(kind, OpKind::Mul);
                // each operand's gradient accumulates over the output in chunks of its own size
                let accumulate = |gx: &mut [R], other: &[R], scale: R| {
                    let (nx, no) = (gx.len(), other.len());
                    for (gc, base) in g.chunks(nx).zip((0..).step_by(nx)) {
                        if is_mul && no >= nx {
                            let off = base % no;
                            for ((d, &gj), &o) in gx.iter_mut().zip(gc).zip(&other[off..off + nx]) {
                                *d = *d + gj * o;
                            }
                        } else if is_mul {
                            for (dc, gcc) in gx.chunks_mut(no).zip(gc.chunks(no)) {
                                for ((d, &gj), &o) in dc.iter_mut().zip(gcc).zip(other) {
                                    *d = *d + gj * o;
                                }
                            }
                        } else {
                            for (d, &gj) in gx.iter_mut().zip(gc) {
                                *d = *d + scale * gj;
                            }
                        }
                    }
                };
                accumulate(add_into(&mut grads[ins[0].0], na), b.data(), R::one());
                accumulate(add_into(&mut grads[ins[1].0], nb), a.data(), sign);
            }
            OpKind::Scale(c) => {
                let c = R::of(*c);
                let ga = add_into(&mut grads[ins[0].0], na);
                for (d, &gj) in ga.iter_mut().zip(g) {
                    *d = *d + gj * c;
                }
            }
            OpKind::Concat { axis } => {
                let (outer, _, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for o in 0..outer {
                    for v in ins {
                        let t = &self.nodes[v.0].value;
                        let block = t.shape()[*axis] * inner;
                        let gv = add_into(&mut grads[v.0], t.numel());
                        for (d, &s) in gv[o * block..(o + 1) * block].iter_mut().zip(&g[offset..offset + block]) {
                            *d = *d + s;
                        }
                        offset += block;
                    }
                }
            }
            OpKind::Slice { axis, start, end } => {
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                let width = (end - start) * inner;
                let ga = add_into(&mut grads[ins[0].0], na);
                for o in 0..outer {
                    let base = o * len * inner + start * inner;
                    for (d, &s) in ga[base..base + width].iter_mut().zip(&g[o * width..(o + 1) * width]) {
                        *d = *d + s;
                    }
                }
            }
            OpKind::SumAxis(axis) | OpKind::MeanAxis(axis) => {
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                let scale = if matches!(kind, OpKind::MeanAxis(_)) { R::one() / R::of(len as f64) } else { R::one() };
                let ga = add_into(&mut grads[ins[0].0], na);
                for o in 0..outer {
                    for l in 0..len {
                        let dst = &mut ga[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, &s) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                            *d = *d + s * scale;
                        }
                    }
                }
            }
            OpKind::MaxAxis(axis) => {
                let (_, len, inner) = axis_split(a.shape(), *axis);
                let ga = add_into(&mut grads[ins[0].0], na);
                for (idx, (&gj, &l)) in g.iter().zip(&node.argmax).enumerate() {
                    let (o, j) = (idx / inner.max(1), idx % inner.max(1));
                    let src = (o * len + l) * inner + j;
                    ga[src] = ga[src] + gj;
                }
            }
            OpKind::Sigmoid => elementwise(grads, ins[0], na, g, |j| y[j] * (R::one() - y[j])),
            OpKind::Tanh => elementwise(grads, ins[0], na, g, |j| R::one() - y[j] * y[j]),
            OpKind::Relu => elementwise(grads, ins[0], na, g, |j| if a.data()[j] > R::zero() { R::one() } else { R::zero() }),
            OpKind::Log => elementwise(grads, ins[0], na, g, |j| R::one() / a.data()[j]),
            OpKind::Square => elementwise(grads, ins[0], na, g, |j| R::of(2.0) * a.data()[j]),
            OpKind::SoftmaxAxis(axis) | OpKind::LogSoftmaxAxis(axis) => {
                let (outer, len, inner) = axis_split(a.shape(), *axis);
                let log = matches!(kind, OpKind::LogSoftmaxAxis(_));
                let ga = add_into(&mut grads[ins[0].0], na);
                for o in 0..outer {
                    for j in 0..inner {
                        let idx = |l: usize| (o * len + l) * inner + j;
                        if log {
                            let total: R = (0..len).map(|l| g[idx(l)]).sum();
                            for l in 0..len {
                                ga[idx(l)] = ga[idx(l)] + g[idx(l)] - y[idx(l)].exp() * total;
                            }
                        } else {
                            let dot: R = (0..len).map(|l| g[idx(l)] * y[idx(l)]).sum();
                            for l in 0..len {
                                ga[idx(l)] = ga[idx(l)] + y[idx(l)] * (g[idx(l)] - dot);
                            }
                        }
                    }
                }
            }
            OpKind::SelectByMask => {
                let mask = a.data();
                for (slot, on) in [(1usize, true), (2usize, false)] {
                    let nv = self.nodes[ins[slot].0].value.numel();
                    let gv = add_into(&mut grads[ins[slot].0], nv);
                    for (j, &gj) in g.iter().enumerate() {
                        if (mask[j] != R::zero()) == on {
                            gv[j] = gv[j] + gj;
                        }
                    }
                }
            }
            OpKind::Reshape(_) => elementwise(grads, ins[0], na, g, |_| R::one()),
            OpKind::RepeatAxis { axis, count } => {
                let outer: usize = a.shape()[..*axis].iter().product();
                let inner: usize = a.shape()[*axis..].iter().product();
                let ga = add_into(&mut grads[ins[0].0], na);
                for o in 0..outer {
                    for c in 0..*count {
                        let src = &g[(o * count + c) * inner..(o * count + c + 1) * inner];
                        for (d, &s) in ga[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
            OpKind::Permute(perm) => {
                let ga = add_into(&mut grads[ins[0].0], na);
                for (j, o) in permute_map(a.shape(), perm).into_iter().enumerate() {
                    ga[o] = ga[o] + g[j];
                }
            }
            OpKind::GatherRows(rows) => {
                let cols = a.shape()[a.rank() - 1];
                let ga = add_into(&mut grads[ins[0].0], na);
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        ga[r * cols + c] = ga[r * cols + c] + g[k * cols + c];
                    }
                }
            }
        }
    }
}

fn map<R: Real>(a: &Tensor<R>, f: impl Fn(R) -> R) -> Tensor<R> {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

fn elementwise<R: Real>(grads: &mut [Option<Vec<R>>], input: Var, numel: usize, g: &[R], local: impl Fn(usize) -> R) {
    let ga = add_into(&mut grads[input.0], numel);
    for (j, (d, &gj)) in ga.iter_mut().zip(g).enumerate() {
        *d = *d + gj * local(j);
    }
}

macro_rules! unary {
    ($($fn_name:ident => $kind:expr),* $(,)?) => {
        $(
            pub fn $fn_name(&mut self, a: Var) -> Result<Var> {
                self.forward_op($kind, &[a])
            }
        )*
    };
}

/// Typed shorthands over [`Graph::forward_op`].
impl<R: Real> Graph<R> {
    unary!(sigmoid => OpKind::Sigmoid, tanh => OpKind::Tanh, relu => OpKind::Relu, log => OpKind::Log, square => OpKind::Square);

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward_op(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.forward_op(OpKind::Scale(c), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.forward_op(OpKind::Concat { axis }, parts)
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.forward_op(OpKind::Slice { axis, start, end }, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward_op(OpKind::SumAxis(axis), &[a])
    }

    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward_op(OpKind::MaxAxis(axis), &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward_op(OpKind::MeanAxis(axis), &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward_op(OpKind::SoftmaxAxis(axis), &[a])
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.forward_op(OpKind::LogSoftmaxAxis(axis), &[a])
    }

    pub fn select(&mut self, mask: Var, on_true: Var, on_false: Var) -> Result<Var> {
        self.forward_op(OpKind::SelectByMask, &[mask, on_true, on_false])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if self.shape(a) == shape.as_slice() {
            return Ok(a);
        }
        self.forward_op(OpKind::Reshape(shape), &[a])
    }

    pub fn repeat(&mut self, a: Var, axis: usize, count: usize) -> Result<Var> {
        self.forward_op(OpKind::RepeatAxis { axis, count }, &[a])
    }

    pub fn permute(&mut self, a: Var, perm: Vec<usize>) -> Result<Var> {
        self.forward_op(OpKind::Permute(perm), &[a])
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        self.forward_op(OpKind::GatherRows(rows), &[a])
    }

    /// Sum of all elements as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let flat = self.reshape(a, vec![n])?;
        self.sum_axis(flat, 0)
    }
}
