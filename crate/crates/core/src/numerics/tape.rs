//! Define-by-run reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node to the tape, so node
//! order is a topological order. `backward` walks the nodes in reverse.
//! Parameter leaves borrow their values; the tape never copies weights.

use std::borrow::Cow;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::ops::{self, Activation, LossKind};
use super::{Parameter, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

type VjpFn<'a> = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + 'a>;

enum Op<'a> {
    Leaf,
    Affine { w: usize, x: usize, b: usize },
    MatVec { w: usize, x: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Act(Activation, usize),
    Concat(Vec<usize>),
    Slice { src: usize, start: usize },
    Column { src: usize, col: usize },
    AddN(Vec<usize>),
    Sum(usize),
    Loss { kind: LossKind, pred: usize, target: Tensor },
    Custom { inputs: Vec<usize>, vjp: VjpFn<'a> },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op<'a>,
    needs_grad: bool,
}

pub struct Tape<'a> {
    id: usize,
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn var(&self, index: usize) -> Var {
        Var { tape: self.id, index }
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage("variable does not belong to this tape".into()));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op<'a>, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(self.var(self.nodes.len() - 1))
    }

    fn needs(&self, indices: &[usize]) -> bool {
        indices.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable does not belong to this tape");
        &self.nodes[v.index].value
    }

    /// Borrowed parameter leaf. Gradients are tracked only if it is trainable.
    pub fn param(&mut self, p: &'a Parameter) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(&p.value),
            op: Op::Leaf,
            needs_grad: p.trainable,
        });
        self.var(self.nodes.len() - 1)
    }

    /// Owned leaf; `requires_grad` decides whether backward reports a gradient for it.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (w, x, b) = (self.index(w)?, self.index(x)?, self.index(b)?);
        let out = ops::affine(&self.nodes[w].value, &self.nodes[x].value, &self.nodes[b].value)?;
        let needs = self.needs(&[w, x, b]);
        self.push(Cow::Owned(out), Op::Affine { w, x, b }, needs, "affine")
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (w, x) = (self.index(w)?, self.index(x)?);
        let out = ops::matvec(&self.nodes[w].value, &self.nodes[x].value)?;
        let needs = self.needs(&[w, x]);
        self.push(Cow::Owned(out), Op::MatVec { w, x }, needs, "matvec")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Tensor)> {
        let (a, b) = (self.index(a)?, self.index(b)?);
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((a, b, Tensor::from_parts(ta.shape().to_vec(), data)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b, out) = self.binary(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(&[a, b]);
        self.push(Cow::Owned(out), Op::Add(a, b), needs, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b, out) = self.binary(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(&[a, b]);
        self.push(Cow::Owned(out), Op::Sub(a, b), needs, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b, out) = self.binary(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(&[a, b]);
        self.push(Cow::Owned(out), Op::Mul(a, b), needs, "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let a = self.index(a)?;
        let t = &self.nodes[a].value;
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v * factor).collect());
        let needs = self.needs(&[a]);
        self.push(Cow::Owned(out), Op::Scale(a, factor), needs, "scale")
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Result<Var> {
        let a = self.index(a)?;
        let out = ops::activation(kind, &self.nodes[a].value)?;
        let needs = self.needs(&[a]);
        self.push(Cow::Owned(out), Op::Act(kind, a), needs, "activation")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(Activation::Relu, a)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.activation(Activation::Softmax, a)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&v| self.index(v)).collect::<Result<Vec<_>>>()?;
        let tensors: Vec<&Tensor> = idx.iter().map(|&i| self.nodes[i].value.as_ref()).collect();
        let out = ops::concat(&tensors)?;
        let needs = self.needs(&idx);
        self.push(Cow::Owned(out), Op::Concat(idx), needs, "concat")
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.index(a)?;
        let t = &self.nodes[src].value;
        if !t.is_vector() || len == 0 || start + len > t.len() {
            return Err(Error::Dimension {
                op: "slice",
                left: t.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let out = Tensor::from_parts(vec![len], t.data()[start..start + len].to_vec());
        let needs = self.needs(&[src]);
        self.push(Cow::Owned(out), Op::Slice { src, start }, needs, "slice")
    }

    /// Column `col` of a matrix node, as a vector.
    pub fn column(&mut self, m: Var, col: usize) -> Result<Var> {
        let src = self.index(m)?;
        let out = self.nodes[src].value.column(col)?;
        let needs = self.needs(&[src]);
        self.push(Cow::Owned(out), Op::Column { src, col }, needs, "column")
    }

    /// Elementwise sum of same-shaped nodes.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var> {
        let idx = terms.iter().map(|&v| self.index(v)).collect::<Result<Vec<_>>>()?;
        let first = idx
            .first()
            .ok_or_else(|| Error::Domain("add_n of an empty term list".into()))?;
        let shape = self.nodes[*first].value.shape().to_vec();
        let mut acc = Tensor::zeros(&shape);
        for &i in &idx {
            let t = &self.nodes[i].value;
            if t.shape() != shape.as_slice() {
                return Err(Error::Dimension {
                    op: "add_n",
                    left: shape,
                    right: t.shape().to_vec(),
                });
            }
            acc.add_assign(t);
        }
        let needs = self.needs(&idx);
        self.push(Cow::Owned(acc), Op::AddN(idx), needs, "add_n")
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.index(a)?;
        let total = self.nodes[a].value.data().iter().sum();
        let needs = self.needs(&[a]);
        self.push(Cow::Owned(Tensor::scalar(total)), Op::Sum(a), needs, "sum")
    }

    pub fn loss(&mut self, kind: LossKind, prediction: Var, target: Tensor) -> Result<Var> {
        let pred = self.index(prediction)?;
        let value = ops::loss_eval(kind, &self.nodes[pred].value, &target)?;
        let needs = self.needs(&[pred]);
        self.push(
            Cow::Owned(Tensor::scalar(value)),
            Op::Loss { kind, pred, target },
            needs,
            "loss",
        )
    }

    /// Records an operation with a caller-supplied value and vector-Jacobian product.
    ///
    /// `vjp(inputs, output, grad_output)` must return one gradient per input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        forward: impl FnOnce(&[&Tensor]) -> Result<Tensor>,
        vjp: impl Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + 'a,
    ) -> Result<Var> {
        let idx = inputs.iter().map(|&v| self.index(v)).collect::<Result<Vec<_>>>()?;
        let tensors: Vec<&Tensor> = idx.iter().map(|&i| self.nodes[i].value.as_ref()).collect();
        let out = forward(&tensors)?;
        let needs = self.needs(&idx);
        self.push(
            Cow::Owned(out),
            Op::Custom {
                inputs: idx,
                vjp: Box::new(vjp),
            },
            needs,
            "custom",
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.index(loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[root] = Some(vec![1.0]);

        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].needs_grad)
                    .map(|g| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g))
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Affine { w, x, b } => {
                matvec_backward(nodes, grads, g, *w, *x);
                if let Some(gb) = slot(nodes, grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::MatVec { w, x } => {
                matvec_backward(nodes, grads, g, *w, *x);
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
                if let Some(ga) = slot(nodes, grads, *a) {
                    for k in 0..g.len() {
                        ga[k] += g[k] * vb[k];
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for k in 0..g.len() {
                        gb[k] += g[k] * va[k];
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s * factor);
                }
            }
            Op::Act(kind, a) => {
                let x = nodes[*a].value.data();
                let y = out.data();
                if let Some(ga) = slot(nodes, grads, *a) {
                    match kind {
                        Activation::Relu => {
                            for k in 0..g.len() {
                                if x[k] > 0.0 {
                                    ga[k] += g[k];
                                }
                            }
                        }
                        Activation::Sigmoid => {
                            for k in 0..g.len() {
                                ga[k] += g[k] * y[k] * (1.0 - y[k]);
                            }
                        }
                        Activation::Tanh => {
                            for k in 0..g.len() {
                                ga[k] += g[k] * (1.0 - y[k] * y[k]);
                            }
                        }
                        Activation::Softmax => {
                            let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                            for k in 0..g.len() {
                                ga[k] += y[k] * (g[k] - dot);
                            }
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.len();
                    if let Some(gp) = slot(nodes, grads, p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::Slice { src, start } => {
                if let Some(gs) = slot(nodes, grads, *src) {
                    add_into(&mut gs[*start..*start + g.len()], g);
                }
            }
            Op::Column { src, col } => {
                let cols = nodes[*src].value.cols();
                if let Some(gs) = slot(nodes, grads, *src) {
                    for (r, &gr) in g.iter().enumerate() {
                        gs[r * cols + col] += gr;
                    }
                }
            }
            Op::AddN(terms) => {
                for &t in terms {
                    if let Some(gt) = slot(nodes, grads, t) {
                        add_into(gt, g);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Loss { kind, pred, target } => {
                let local = ops::loss_grad(*kind, &nodes[*pred].value, target);
                if let Some(gp) = slot(nodes, grads, *pred) {
                    gp.iter_mut().zip(local).for_each(|(d, l)| *d += g[0] * l);
                }
            }
            Op::Custom { inputs, vjp } => {
                let tensors: Vec<&Tensor> = inputs.iter().map(|&j| nodes[j].value.as_ref()).collect();
                let gout = Tensor::from_parts(out.shape().to_vec(), g.to_vec());
                let input_grads = vjp(&tensors, out, &gout);
                for (&j, gj) in inputs.iter().zip(input_grads) {
                    if let Some(gs) = slot(nodes, grads, j) {
                        add_into(gs, gj.data());
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn slot<'g>(nodes: &[Node<'_>], grads: &'g mut [Option<Vec<f64>>], j: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[j].needs_grad {
        return None;
    }
    Some(grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.len()]))
}

fn matvec_backward(nodes: &[Node<'_>], grads: &mut [Option<Vec<f64>>], g: &[f64], wi: usize, xi: usize) {
    let w = &nodes[wi].value;
    let cols = w.cols();
    let xs = nodes[xi].value.data();
    if let Some(gw) = slot(nodes, grads, wi) {
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &mut gw[r * cols..(r + 1) * cols];
            row.iter_mut().zip(xs).for_each(|(d, xv)| *d += gr * xv);
        }
    }
    if let Some(gx) = slot(nodes, grads, xi) {
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            let row = &w.data()[r * cols..(r + 1) * cols];
            gx.iter_mut().zip(row).for_each(|(d, wv)| *d += gr * wv);
        }
    }
}

/// Result of a reverse sweep: one optional gradient per tape node.
pub struct Gradients {
    tape: usize,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss or was not tracked.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Adds the gradient for `v` into `param.grad` when the parameter is trainable.
    pub fn accumulate(&self, v: Var, param: &mut Parameter) {
        if !param.trainable {
            return;
        }
        if let Some(g) = self.wrt(v) {
            param.grad.add_assign(g);
        }
    }
}
