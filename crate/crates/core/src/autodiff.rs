//! Tape-based reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles during a
//! forward pass. [`Tape::backward`] then walks the recording in reverse and
//! returns the gradient of a scalar loss with respect to every leaf created
//! with [`Tape::param`]. The tape is cleared afterwards, so one tape serves
//! exactly one forward/backward pair.
//!
//! Selection-type primitives (max, min, sort) fix their choice at forward time
//! and backpropagate through that fixed choice. Ties resolve to the lowest
//! index. Broadcasting is limited to a single-element tensor combined with a
//! tensor of any shape.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// First element; the value of a scalar tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Gather(NodeId, Vec<usize>),
    Abs(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Pow(NodeId, f64),
    Sqrt(NodeId),
    Neg(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Dot(NodeId, NodeId),
    Norm(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    Reshape(NodeId),
    AddScalar(NodeId),
    Scale(NodeId, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    trainable: bool,
}

/// Recording of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Gradients of a scalar loss, keyed by the node id of each trainable leaf.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    map: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.map.iter()
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
        self.nodes.borrow().is_empty()
    }

    /// Leaf that receives a gradient in [`Tape::backward`].
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, true)
    }

    /// Leaf that is treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    pub fn vector(&self, data: &[f64]) -> Var<'_> {
        self.constant(Tensor::vector(data.to_vec()))
    }

    fn push_leaf(&self, value: Tensor, trainable: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op, inputs: &[NodeId]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = inputs.iter().any(|&i| nodes[i].needs_grad);
        nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable: false,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: NodeId) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Concatenates vars along their flattened data into a rank-1 result.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        let ids: Vec<NodeId> = parts.iter().map(|v| v.id).collect();
        let data: Vec<f64> = {
            let nodes = self.nodes.borrow();
            ids.iter().flat_map(|&i| nodes[i].value.data.iter().copied()).collect()
        };
        Ok(self.push(Tensor::vector(data), Op::Concat(ids.clone()), &ids))
    }

    /// Reverse pass from a scalar `loss`; clears the tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        if nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let root = loss.id;
        if !nodes[root].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                nodes[root].value.shape
            )));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            propagate(&nodes, node, &g, &mut grads);
        }

        let mut map = HashMap::new();
        for (id, node) in nodes.iter().enumerate().take(root + 1) {
            if node.trainable {
                let data = grads[id].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                map.insert(
                    id,
                    Tensor {
                        shape: node.value.shape.clone(),
                        data,
                    },
                );
            }
        }
        for (id, node) in nodes.iter().enumerate().skip(root + 1) {
            if node.trainable {
                map.insert(id, Tensor::zeros(&node.value.shape));
            }
        }
        Ok(Gradients { map })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

/// Adds `g` into the gradient slot of a binary-op operand, summing when the
/// operand was broadcast from a single element.
fn add_broadcast(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize, contribs: impl Iterator<Item = f64>) {
    let slot = accumulate(grads, id, len);
    if len == 1 {
        slot[0] += contribs.sum::<f64>();
    } else {
        for (s, c) in slot.iter_mut().zip(contribs) {
            *s += c;
        }
    }
}

fn at(v: &[f64], k: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[k]
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value.data;
    let val = |i: NodeId| &nodes[i].value.data;
    let live = |i: NodeId| nodes[i].needs_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if live(*a) {
                add_broadcast(grads, *a, val(*a).len(), g.iter().copied());
            }
            if live(*b) {
                add_broadcast(grads, *b, val(*b).len(), g.iter().copied());
            }
        }
        Op::Sub(a, b) => {
            if live(*a) {
                add_broadcast(grads, *a, val(*a).len(), g.iter().copied());
            }
            if live(*b) {
                add_broadcast(grads, *b, val(*b).len(), g.iter().map(|x| -x));
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if live(*a) {
                let c = g.iter().enumerate().map(|(k, gk)| gk * at(vb, k));
                add_broadcast(grads, *a, va.len(), c);
            }
            if live(*b) {
                let c = g.iter().enumerate().map(|(k, gk)| gk * at(va, k));
                add_broadcast(grads, *b, vb.len(), c);
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if live(*a) {
                let c = g.iter().enumerate().map(|(k, gk)| gk / at(vb, k));
                add_broadcast(grads, *a, va.len(), c);
            }
            if live(*b) {
                let c = g.iter().enumerate().map(|(k, gk)| {
                    let d = at(vb, k);
                    -gk * at(va, k) / (d * d)
                });
                add_broadcast(grads, *b, vb.len(), c);
            }
        }
        Op::MatMul(a, b) => {
            let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = (ta.shape[0], ta.shape[1]);
            let n = if tb.shape.len() == 2 { tb.shape[1] } else { 1 };
            if live(*a) {
                // dA = G · Bᵀ
                let slot = accumulate(grads, *a, m * k);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    let arow = &mut slot[i * k..(i + 1) * k];
                    for (j, s) in arow.iter_mut().enumerate() {
                        let brow = &tb.data[j * n..(j + 1) * n];
                        *s += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            if live(*b) {
                // dB = Aᵀ · G
                let slot = accumulate(grads, *b, k * n);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    let arow = &ta.data[i * k..(i + 1) * k];
                    for (j, &aij) in arow.iter().enumerate() {
                        if aij == 0.0 {
                            continue;
                        }
                        let srow = &mut slot[j * n..(j + 1) * n];
                        for (s, gv) in srow.iter_mut().zip(grow) {
                            *s += aij * gv;
                        }
                    }
                }
            }
        }
        Op::Sum(a) => {
            let len = val(*a).len();
            for s in accumulate(grads, *a, len).iter_mut() {
                *s += g[0];
            }
        }
        Op::Mean(a) => {
            let len = val(*a).len();
            let share = g[0] / len as f64;
            for s in accumulate(grads, *a, len).iter_mut() {
                *s += share;
            }
        }
        Op::Gather(a, idx) => {
            let len = val(*a).len();
            let slot = accumulate(grads, *a, len);
            for (gk, &i) in g.iter().zip(idx) {
                slot[i] += gk;
            }
        }
        Op::Abs(a) => unary(
            grads,
            *a,
            val(*a),
            g,
            |x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            },
            out,
        ),
        Op::Exp(a) => unary(grads, *a, val(*a), g, |_, y| y, out),
        Op::Log(a) => unary(grads, *a, val(*a), g, |x, _| 1.0 / x, out),
        Op::Pow(a, p) => {
            let p = *p;
            unary(grads, *a, val(*a), g, |x, _| p * x.powf(p - 1.0), out)
        }
        Op::Sqrt(a) => unary(grads, *a, val(*a), g, |_, y| 0.5 / y, out),
        Op::Neg(a) => unary(grads, *a, val(*a), g, |_, _| -1.0, out),
        Op::Relu(a) => unary(grads, *a, val(*a), g, |x, _| if x > 0.0 { 1.0 } else { 0.0 }, out),
        Op::Sigmoid(a) => unary(grads, *a, val(*a), g, |_, y| y * (1.0 - y), out),
        Op::Sin(a) => unary(grads, *a, val(*a), g, |x, _| x.cos(), out),
        Op::Cos(a) => unary(grads, *a, val(*a), g, |x, _| -x.sin(), out),
        Op::AddScalar(a) => unary(grads, *a, val(*a), g, |_, _| 1.0, out),
        Op::Scale(a, c) => {
            let c = *c;
            unary(grads, *a, val(*a), g, |_, _| c, out)
        }
        Op::Dot(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            if live(*a) {
                let slot = accumulate(grads, *a, va.len());
                for (s, y) in slot.iter_mut().zip(vb) {
                    *s += g[0] * y;
                }
            }
            if live(*b) {
                let slot = accumulate(grads, *b, vb.len());
                for (s, x) in slot.iter_mut().zip(va) {
                    *s += g[0] * x;
                }
            }
        }
        Op::Norm(a) => {
            let va = val(*a);
            let n = out[0];
            let slot = accumulate(grads, *a, va.len());
            if n > 0.0 {
                for (s, x) in slot.iter_mut().zip(va) {
                    *s += g[0] * x / n;
                }
            }
        }
        Op::Softmax(a) => {
            let inner: f64 = g.iter().zip(out).map(|(gi, yi)| gi * yi).sum();
            let slot = accumulate(grads, *a, out.len());
            for ((s, gi), yi) in slot.iter_mut().zip(g).zip(out) {
                *s += yi * (gi - inner);
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = val(p).len();
                if live(p) {
                    let slot = accumulate(grads, p, len);
                    for (s, gk) in slot.iter_mut().zip(&g[offset..offset + len]) {
                        *s += gk;
                    }
                }
                offset += len;
            }
        }
        Op::Reshape(a) => {
            let slot = accumulate(grads, *a, g.len());
            for (s, gk) in slot.iter_mut().zip(g) {
                *s += gk;
            }
        }
    }
}

fn unary(
    grads: &mut [Option<Vec<f64>>],
    input: NodeId,
    x: &[f64],
    g: &[f64],
    local: impl Fn(f64, f64) -> f64,
    y: &[f64],
) {
    let slot = accumulate(grads, input, x.len());
    for k in 0..x.len() {
        slot[k] += g[k] * local(x[k], y[k]);
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &*self.tape.value(self.id))
            .finish()
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id).clone()
    }

    pub fn data(&self) -> Vec<f64> {
        self.tape.value(self.id).data.clone()
    }

    pub fn item(&self) -> f64 {
        self.tape.value(self.id).data[0]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape.clone()
    }

    pub fn len(&self) -> usize {
        self.tape.value(self.id).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_tape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract(format!("{op}: operands live on different tapes")))
        }
    }

    fn binary(
        &self,
        other: Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: fn(NodeId, NodeId) -> Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other, op)?;
        let value = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            let shape = if a.shape == b.shape || b.is_scalar() {
                a.shape.clone()
            } else if a.is_scalar() {
                b.shape.clone()
            } else {
                return Err(Error::Shape {
                    op,
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            };
            let n = a.len().max(b.len());
            let data = (0..n).map(|k| f(at(&a.data, k), at(&b.data, k))).collect();
            Tensor { shape, data }
        };
        Ok(self.tape.push(value, make(self.id, other.id), &[self.id, other.id]))
    }

    fn map(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = {
            let a = self.tape.value(self.id);
            Tensor {
                shape: a.shape.clone(),
                data: a.data.iter().map(|&x| f(x)).collect(),
            }
        };
        self.tape.push(value, op, &[self.id])
    }

    fn check_domain(&self, op: &'static str, ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
        let a = self.tape.value(self.id);
        if let Some((k, x)) = a.data.iter().enumerate().find(|(_, &x)| !ok(x)) {
            return Err(Error::Domain {
                op,
                detail: format!("element {k} = {x} is {what}"),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "subtract", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "multiply", |a, b| a * b, Op::Mul)
    }

    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        {
            let b = self.tape.value(other.id);
            if b.data.contains(&0.0) {
                return Err(Error::Domain {
                    op: "divide",
                    detail: "division by zero".into(),
                });
            }
        }
        self.binary(other, "divide", |a, b| a / b, Op::Div)
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.map(|x| x + c, Op::AddScalar(self.id))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.map(|x| x * c, Op::Scale(self.id, c))
    }

    /// `[m,k]·[k,n] → [m,n]` or `[m,k]·[k] → [m]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other, "matmul")?;
        let value = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            let mismatch = || Error::Shape {
                op: "matmul",
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            };
            if a.shape.len() != 2 {
                return Err(mismatch());
            }
            let (m, k) = (a.shape[0], a.shape[1]);
            let (kb, n, out_shape) = match b.shape.as_slice() {
                [kb] => (*kb, 1, vec![m]),
                [kb, n] => (*kb, *n, vec![m, *n]),
                _ => return Err(mismatch()),
            };
            if kb != k {
                return Err(mismatch());
            }
            let mut data = vec![0.0; m * n];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let orow = &mut data[i * n..(i + 1) * n];
                for (j, &aij) in arow.iter().enumerate() {
                    if aij == 0.0 {
                        continue;
                    }
                    let brow = &b.data[j * n..(j + 1) * n];
                    for (o, bv) in orow.iter_mut().zip(brow) {
                        *o += aij * bv;
                    }
                }
            }
            Tensor { shape: out_shape, data }
        };
        Ok(self
            .tape
            .push(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    pub fn sum(&self) -> Var<'t> {
        let s: f64 = self.tape.value(self.id).data.iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Var<'t> {
        let m = {
            let a = self.tape.value(self.id);
            a.data.iter().sum::<f64>() / a.len() as f64
        };
        self.tape.push(Tensor::scalar(m), Op::Mean(self.id), &[self.id])
    }

    fn select_axis(&self, axis: usize, op: &'static str, better: fn(f64, f64) -> bool) -> Result<Var<'t>> {
        let (picks, shape) = {
            let a = self.tape.value(self.id);
            if a.is_empty() {
                return Err(Error::Contract(format!("{op} of an empty tensor")));
            }
            let pick = |idx: &mut dyn Iterator<Item = usize>| {
                let mut best = idx.next().unwrap();
                for i in idx {
                    if better(a.data[i], a.data[best]) {
                        best = i;
                    }
                }
                best
            };
            match (a.shape.len(), axis) {
                (0, 0) | (1, 0) => (vec![pick(&mut (0..a.len()))], Vec::new()),
                (2, 0) => {
                    let (r, c) = (a.shape[0], a.shape[1]);
                    ((0..c).map(|j| pick(&mut (0..r).map(|i| i * c + j))).collect(), vec![c])
                }
                (2, 1) => {
                    let (r, c) = (a.shape[0], a.shape[1]);
                    ((0..r).map(|i| pick(&mut (i * c..(i + 1) * c))).collect(), vec![r])
                }
                _ => {
                    return Err(Error::Shape {
                        op,
                        lhs: a.shape.clone(),
                        rhs: vec![axis],
                    })
                }
            }
        };
        self.gather_shaped(picks, shape)
    }

    /// Maximum over `axis`; the argmax (lowest index on ties) is fixed here.
    pub fn max_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.select_axis(axis, "max", |x, best| x > best)
    }

    pub fn min_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.select_axis(axis, "min", |x, best| x < best)
    }

    /// Maximum over every element.
    pub fn max(&self) -> Result<Var<'t>> {
        self.reshape(&[self.len()])?.max_axis(0)
    }

    pub fn min(&self) -> Result<Var<'t>> {
        self.reshape(&[self.len()])?.min_axis(0)
    }

    pub fn abs(&self) -> Var<'t> {
        self.map(f64::abs, Op::Abs(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.map(f64::exp, Op::Exp(self.id))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.check_domain("log", |x| x > 0.0, "not strictly positive")?;
        Ok(self.map(f64::ln, Op::Log(self.id)))
    }

    /// Elementwise `x^p`. Non-integer or sub-unit exponents need `x > 0`.
    pub fn powf(&self, p: f64) -> Result<Var<'t>> {
        if p.fract() != 0.0 || p < 1.0 {
            self.check_domain("power", |x| x > 0.0, "not strictly positive")?;
        }
        Ok(self.map(|x| x.powf(p), Op::Pow(self.id, p)))
    }

    pub fn sqrt(&self) -> Result<Var<'t>> {
        self.check_domain("sqrt", |x| x > 0.0, "not strictly positive")?;
        Ok(self.map(f64::sqrt, Op::Sqrt(self.id)))
    }

    pub fn neg(&self) -> Var<'t> {
        self.map(|x| -x, Op::Neg(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.map(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn sin(&self) -> Var<'t> {
        self.map(f64::sin, Op::Sin(self.id))
    }

    pub fn cos(&self) -> Var<'t> {
        self.map(f64::cos, Op::Cos(self.id))
    }

    pub fn dot(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other, "dot")?;
        let s = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            if a.shape.len() != 1 || a.shape != b.shape {
                return Err(Error::Shape {
                    op: "dot",
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>()
        };
        Ok(self
            .tape
            .push(Tensor::scalar(s), Op::Dot(self.id, other.id), &[self.id, other.id]))
    }

    /// Euclidean norm of all elements.
    pub fn norm(&self) -> Var<'t> {
        let n = self.tape.value(self.id).data.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.tape.push(Tensor::scalar(n), Op::Norm(self.id), &[self.id])
    }

    pub fn softmax(&self) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value(self.id);
            if a.shape.len() != 1 {
                return Err(Error::Shape {
                    op: "softmax",
                    lhs: a.shape.clone(),
                    rhs: vec![],
                });
            }
            let hi = a.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = a.data.iter().map(|x| (x - hi).exp()).collect();
            let z: f64 = e.iter().sum();
            Tensor::vector(e.into_iter().map(|x| x / z).collect())
        };
        Ok(self.tape.push(value, Op::Softmax(self.id), &[self.id]))
    }

    fn gather_shaped(&self, indices: Vec<usize>, shape: Vec<usize>) -> Result<Var<'t>> {
        let data = {
            let a = self.tape.value(self.id);
            if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
                return Err(Error::Shape {
                    op: "index",
                    lhs: a.shape.clone(),
                    rhs: vec![bad],
                });
            }
            indices.iter().map(|&i| a.data[i]).collect()
        };
        let value = Tensor::new(shape, data)?;
        Ok(self.tape.push(value, Op::Gather(self.id, indices), &[self.id]))
    }

    /// Picks flattened elements by index into a rank-1 result.
    pub fn gather(&self, indices: &[usize]) -> Result<Var<'t>> {
        self.gather_shaped(indices.to_vec(), vec![indices.len()])
    }

    /// Single flattened element as a scalar.
    pub fn index(&self, i: usize) -> Result<Var<'t>> {
        self.gather_shaped(vec![i], Vec::new())
    }

    /// Contiguous flattened range `[start, start+len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Var<'t>> {
        self.gather_shaped((start..start + len).collect(), vec![len])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = {
            let a = self.tape.value(self.id);
            Tensor::new(shape.to_vec(), a.data.clone()).map_err(|_| Error::Shape {
                op: "reshape",
                lhs: a.shape.clone(),
                rhs: shape.to_vec(),
            })?
        };
        Ok(self.tape.push(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Reorders this rank-1 var by ascending `keys` (stable, so ties keep
    /// index order). Returns the result and the permutation used.
    pub fn sort_by_key(&self, keys: &[f64]) -> Result<(Var<'t>, Vec<usize>)> {
        if keys.len() != self.len() {
            return Err(Error::Shape {
                op: "sort",
                lhs: self.shape(),
                rhs: vec![keys.len()],
            });
        }
        let mut perm: Vec<usize> = (0..keys.len()).collect();
        perm.sort_by(|&i, &j| keys[i].total_cmp(&keys[j]));
        Ok((self.gather(&perm)?, perm))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
