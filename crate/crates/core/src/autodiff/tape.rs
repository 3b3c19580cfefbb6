//! Tape-based reverse-mode differentiation over small dense tensors.
//!
//! Every operation appends a node holding its forward value and the inputs
//! needed by its backward rule. [`Tape::backward`] walks the nodes in exact
//! reverse order and accumulates gradients additively, so a value consumed
//! twice receives both contributions.

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Tape handles for the nine GRU tensors.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl GruVars {
    fn all(&self) -> [Var; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h,
            self.b_h,
        ]
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: T },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Dot(Var, Var),
    Sum(Var),
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    WeightedSum { weights: Var, items: Vec<Var> },
    Row { table: Var, index: usize },
    Gru {
        h: Var,
        m: Var,
        p: GruVars,
        z: Vec<T>,
        r: Vec<T>,
        c: Vec<T>,
    },
    CrossEntropy { logits: Var, target: usize, probs: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records executed operations for one forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    track_kinks: bool,
    relu_signs: Vec<bool>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            track_kinks: false,
            relu_signs: Vec::new(),
        }
    }

    /// A tape that records the activation side of every ReLU input, used by
    /// the gradient checker to skip coordinates whose perturbation crosses a kink.
    pub fn with_kink_tracking() -> Self {
        Tape {
            track_kinks: true,
            ..Self::new()
        }
    }

    pub fn relu_signature(&self) -> &[bool] {
        &self.relu_signs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Adds a leaf holding a copy of `t`.
    pub fn leaf(&mut self, t: &Tensor<T>, requires_grad: bool) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), requires_grad, Op::Leaf)
    }

    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.leaf(t, false)
    }

    pub fn constant_vec(&mut self, values: Vec<T>) -> Var {
        let shape = vec![values.len()];
        self.push(shape, values, false, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant_vec(vec![T::zero(); n])
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// First element; intended for scalar nodes.
    pub fn scalar(&self, v: Var) -> T {
        self.node(v).value[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`]; `None` for nodes
    /// that do not require a gradient or were not reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn vector_len(&self, v: Var, op: &'static str) -> Result<usize> {
        let s = self.shape(v);
        if s.len() == 1 {
            Ok(s[0])
        } else {
            Err(Error::Shape {
                op,
                left: s.to_vec(),
                right: vec![0],
            })
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// `W·x + b` for `x: [n]`, `W: [m, n]`, `b: [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.affine_map(x, w, Some(b))
    }

    /// `W·x` without bias.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.affine_map(x, w, None)
    }

    fn affine_map(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::Shape {
                op: "linear",
                left: ws,
                right: xs,
            });
        }
        let (m, n) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(Error::Shape {
                    op: "linear bias",
                    left: ws,
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let mut out = match b {
            Some(b) => self.value(b).to_vec(),
            None => vec![T::zero(); m],
        };
        matvec_into(self.value(w), self.value(x), m, n, &mut out);
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(vec![m], out, rg, Op::Linear { x, w, b }))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), value, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let value = self.value(x).iter().map(|&v| scale * v + shift).collect();
        let rg = self.requires_grad(x);
        self.push(self.shape(x).to_vec(), value, rg, Op::Affine { x, scale })
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.requires_grad(x);
        self.push(self.shape(x).to_vec(), value, rg, op)
    }

    /// `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        if self.track_kinks {
            let signs: Vec<bool> = self.value(x).iter().map(|&v| v > T::zero()).collect();
            self.relu_signs.extend(signs);
        }
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, scalar::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.vector_len(x, "softmax")?;
        if n == 0 {
            return Err(Error::Shape {
                op: "softmax",
                left: vec![0],
                right: vec![1],
            });
        }
        let value = scalar::softmax(self.value(x));
        let rg = self.requires_grad(x);
        Ok(self.push(vec![n], value, rg, Op::Softmax(x)))
    }

    /// Inner product of two vectors; returns a scalar node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.vector_len(a, "dot")?;
        self.same_shape(a, b, "dot")?;
        let s = dot_slices(self.value(a), self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(Vec::new(), vec![s], rg, Op::Dot(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let rg = self.requires_grad(x);
        self.push(Vec::new(), vec![s], rg, Op::Sum(x))
    }

    /// Collects scalar nodes into a vector.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        let mut value = Vec::with_capacity(items.len());
        for &v in items {
            if self.node(v).value.len() != 1 {
                return Err(Error::Shape {
                    op: "stack",
                    left: self.shape(v).to_vec(),
                    right: Vec::new(),
                });
            }
            value.push(self.scalar(v));
        }
        let rg = self.rg(items);
        Ok(self.push(vec![items.len()], value, rg, Op::Stack(items.to_vec())))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, items: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        for &v in items {
            self.vector_len(v, "concat")?;
            value.extend_from_slice(self.value(v));
        }
        let rg = self.rg(items);
        Ok(self.push(vec![value.len()], value, rg, Op::Concat(items.to_vec())))
    }

    /// `Σₖ weights[k]·items[k]` over equally shaped vectors.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let k = self.vector_len(weights, "weighted_sum")?;
        if k != items.len() || k == 0 {
            return Err(Error::Shape {
                op: "weighted_sum",
                left: vec![k],
                right: vec![items.len()],
            });
        }
        let n = self.vector_len(items[0], "weighted_sum")?;
        let mut out = vec![T::zero(); n];
        for (idx, &item) in items.iter().enumerate() {
            self.same_shape(items[0], item, "weighted_sum")?;
            let w = self.value(weights)[idx];
            for (o, &v) in out.iter_mut().zip(self.value(item)) {
                *o += w * v;
            }
        }
        let rg = self.requires_grad(weights) || self.rg(items);
        Ok(self.push(
            vec![n],
            out,
            rg,
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
        ))
    }

    /// Row `index` of a matrix, e.g. an embedding lookup.
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::Shape {
                op: "row",
                left: s,
                right: vec![index],
            });
        }
        if index >= s[0] {
            return Err(Error::Index {
                what: "row",
                index,
                size: s[0],
            });
        }
        let cols = s[1];
        let value = self.value(table)[index * cols..(index + 1) * cols].to_vec();
        let rg = self.requires_grad(table);
        Ok(self.push(vec![cols], value, rg, Op::Row { table, index }))
    }

    /// One GRU step with the reset gate applied before the candidate transform:
    ///
    /// ```text
    /// z  = σ(W_z m + U_z h + b_z)
    /// r  = σ(W_r m + U_r h + b_r)
    /// h̃  = tanh(W_h m + U_h (r ⊙ h) + b_h)
    /// h' = (1 − z) ⊙ h + z ⊙ h̃
    /// ```
    pub fn gru_cell(&mut self, h: Var, m: Var, p: &GruVars) -> Result<Var> {
        let d = self.vector_len(h, "gru_cell")?;
        let n = self.vector_len(m, "gru_cell")?;
        let check = |tape: &Self, v: Var, want: &[usize]| -> Result<()> {
            if tape.shape(v) != want {
                return Err(Error::Shape {
                    op: "gru_cell",
                    left: tape.shape(v).to_vec(),
                    right: want.to_vec(),
                });
            }
            Ok(())
        };
        for w in [p.w_z, p.w_r, p.w_h] {
            check(self, w, &[d, n])?;
        }
        for u in [p.u_z, p.u_r, p.u_h] {
            check(self, u, &[d, d])?;
        }
        for b in [p.b_z, p.b_r, p.b_h] {
            check(self, b, &[d])?;
        }

        let hv = self.value(h);
        let mv = self.value(m);
        let gate = |w: Var, u: Var, b: Var, hin: &[T]| -> Vec<T> {
            let mut a = self.value(b).to_vec();
            matvec_into(self.value(w), mv, d, n, &mut a);
            matvec_into(self.value(u), hin, d, d, &mut a);
            a
        };
        let z: Vec<T> = gate(p.w_z, p.u_z, p.b_z, hv)
            .into_iter()
            .map(scalar::sigmoid)
            .collect();
        let r: Vec<T> = gate(p.w_r, p.u_r, p.b_r, hv)
            .into_iter()
            .map(scalar::sigmoid)
            .collect();
        let rh: Vec<T> = r.iter().zip(hv).map(|(&a, &b)| a * b).collect();
        let c: Vec<T> = gate(p.w_h, p.u_h, p.b_h, &rh)
            .into_iter()
            .map(|a| a.tanh())
            .collect();
        let out: Vec<T> = (0..d)
            .map(|i| (T::one() - z[i]) * hv[i] + z[i] * c[i])
            .collect();

        let rg = self.rg(&[h, m]) || self.rg(&p.all());
        Ok(self.push(
            vec![d],
            out,
            rg,
            Op::Gru {
                h,
                m,
                p: *p,
                z,
                r,
                c,
            },
        ))
    }

    /// `−log softmax(logits)[target]` in log-sum-exp form.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let k = self.vector_len(logits, "cross_entropy")?;
        if target >= k {
            return Err(Error::Index {
                what: "cross_entropy target",
                index: target,
                size: k,
            });
        }
        let x = self.value(logits);
        let loss = scalar::log_sum_exp(x) - x[target];
        let probs = scalar::softmax(x);
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Vec::new(),
            vec![loss],
            rg,
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        ))
    }

    /// Clears gradients from a previous backward pass.
    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Reverse pass from a scalar node. Gradients accumulate into every node
    /// that requires one; call [`Tape::zero_grads`] before re-running.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(loss).to_vec(),
                right: Vec::new(),
            });
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        accumulate(&self.nodes, &mut self.grads, loss, |g| g[0] += T::one());

        for idx in (0..=loss.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, g: &[T]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[idx];
        let val = |v: Var| -> &[T] { &nodes[v.0].value };

        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (m, n) = (nodes[w.0].shape[0], nodes[w.0].shape[1]);
                let wv = val(*w);
                let xv = val(*x);
                accumulate(nodes, grads, *x, |dx| {
                    for i in 0..m {
                        let gi = g[i];
                        let row = &wv[i * n..(i + 1) * n];
                        for j in 0..n {
                            dx[j] += row[j] * gi;
                        }
                    }
                });
                accumulate(nodes, grads, *w, |dw| outer_add(dw, g, xv));
                if let Some(b) = b {
                    accumulate(nodes, grads, *b, |db| add_into(db, g));
                }
            }
            Op::Add(a, b) => {
                accumulate(nodes, grads, *a, |da| add_into(da, g));
                accumulate(nodes, grads, *b, |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                accumulate(nodes, grads, *a, |da| add_into(da, g));
                accumulate(nodes, grads, *b, |db| {
                    for (d, &gi) in db.iter_mut().zip(g) {
                        *d -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                accumulate(nodes, grads, *a, |da| {
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                });
                accumulate(nodes, grads, *b, |db| {
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                });
            }
            Op::Affine { x, scale } => {
                accumulate(nodes, grads, *x, |dx| {
                    for (d, &gi) in dx.iter_mut().zip(g) {
                        *d += *scale * gi;
                    }
                });
            }
            Op::Relu(x) => {
                let xv = val(*x);
                accumulate(nodes, grads, *x, |dx| {
                    for i in 0..g.len() {
                        if xv[i] > T::zero() {
                            dx[i] += g[i];
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                accumulate(nodes, grads, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i] * y[i] * (T::one() - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                accumulate(nodes, grads, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let gy = dot_slices(g, y);
                accumulate(nodes, grads, *x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += y[i] * (g[i] - gy);
                    }
                });
            }
            Op::Dot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let s = g[0];
                accumulate(nodes, grads, *a, |da| {
                    for i in 0..da.len() {
                        da[i] += s * bv[i];
                    }
                });
                accumulate(nodes, grads, *b, |db| {
                    for i in 0..db.len() {
                        db[i] += s * av[i];
                    }
                });
            }
            Op::Sum(x) => {
                let s = g[0];
                accumulate(nodes, grads, *x, |dx| dx.iter_mut().for_each(|d| *d += s));
            }
            Op::Stack(items) => {
                for (i, v) in items.iter().enumerate() {
                    accumulate(nodes, grads, *v, |d| d[0] += g[i]);
                }
            }
            Op::Concat(items) => {
                let mut offset = 0;
                for v in items {
                    let len = nodes[v.0].value.len();
                    accumulate(nodes, grads, *v, |d| add_into(d, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::WeightedSum { weights, items } => {
                let wv = val(*weights);
                accumulate(nodes, grads, *weights, |dw| {
                    for (k, item) in items.iter().enumerate() {
                        dw[k] += dot_slices(g, val(*item));
                    }
                });
                for (k, item) in items.iter().enumerate() {
                    let wk = wv[k];
                    accumulate(nodes, grads, *item, |d| {
                        for i in 0..d.len() {
                            d[i] += wk * g[i];
                        }
                    });
                }
            }
            Op::Row { table, index } => {
                let cols = nodes[table.0].shape[1];
                let start = index * cols;
                accumulate(nodes, grads, *table, |d| add_into(&mut d[start..start + cols], g));
            }
            Op::Gru { h, m, p, z, r, c } => {
                backprop_gru(nodes, grads, g, *h, *m, p, z, r, c);
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let s = g[0];
                accumulate(nodes, grads, *logits, |d| {
                    for i in 0..d.len() {
                        let onehot = if i == *target { T::one() } else { T::zero() };
                        d[i] += s * (probs[i] - onehot);
                    }
                });
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backprop_gru<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    g: &[T],
    h: Var,
    m: Var,
    p: &GruVars,
    z: &[T],
    r: &[T],
    c: &[T],
) {
    let d = g.len();
    let hv = &nodes[h.0].value;
    let mv = &nodes[m.0].value;
    let n = mv.len();
    let val = |v: Var| -> &[T] { &nodes[v.0].value };

    let one = T::one();
    let rh: Vec<T> = (0..d).map(|i| r[i] * hv[i]).collect();
    let da_h: Vec<T> = (0..d).map(|i| g[i] * z[i] * (one - c[i] * c[i])).collect();
    let da_z: Vec<T> = (0..d)
        .map(|i| g[i] * (c[i] - hv[i]) * z[i] * (one - z[i]))
        .collect();
    let mut d_rh = vec![T::zero(); d];
    matvec_t_into(val(p.u_h), &da_h, d, d, &mut d_rh);
    let da_r: Vec<T> = (0..d)
        .map(|i| d_rh[i] * hv[i] * r[i] * (one - r[i]))
        .collect();

    accumulate(nodes, grads, p.w_h, |dw| outer_add(dw, &da_h, mv));
    accumulate(nodes, grads, p.u_h, |du| outer_add(du, &da_h, &rh));
    accumulate(nodes, grads, p.b_h, |db| add_into(db, &da_h));
    accumulate(nodes, grads, p.w_r, |dw| outer_add(dw, &da_r, mv));
    accumulate(nodes, grads, p.u_r, |du| outer_add(du, &da_r, hv));
    accumulate(nodes, grads, p.b_r, |db| add_into(db, &da_r));
    accumulate(nodes, grads, p.w_z, |dw| outer_add(dw, &da_z, mv));
    accumulate(nodes, grads, p.u_z, |du| outer_add(du, &da_z, hv));
    accumulate(nodes, grads, p.b_z, |db| add_into(db, &da_z));

    accumulate(nodes, grads, m, |dm| {
        matvec_t_into(val(p.w_h), &da_h, d, n, dm);
        matvec_t_into(val(p.w_r), &da_r, d, n, dm);
        matvec_t_into(val(p.w_z), &da_z, d, n, dm);
    });
    accumulate(nodes, grads, h, |dh| {
        for i in 0..d {
            dh[i] += g[i] * (one - z[i]) + d_rh[i] * r[i];
        }
        matvec_t_into(val(p.u_r), &da_r, d, d, dh);
        matvec_t_into(val(p.u_z), &da_z, d, d, dh);
    });
}

/// Runs `f` on the gradient buffer of `v`, allocating it on first use.
/// Nodes that do not require a gradient are skipped.
fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    v: Var,
    f: impl FnOnce(&mut [T]),
) {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return;
    }
    let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]);
    f(buf);
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `out += W·x` for row-major `W: [m, n]`.
fn matvec_into<T: Scalar>(w: &[T], x: &[T], m: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        out[i] += dot_slices(&w[i * n..(i + 1) * n], x);
    }
}

/// `out += Wᵀ·g` for row-major `W: [m, n]`.
fn matvec_t_into<T: Scalar>(w: &[T], g: &[T], m: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let gi = g[i];
        let row = &w[i * n..(i + 1) * n];
        for j in 0..n {
            out[j] += row[j] * gi;
        }
    }
}

/// `dst += a ⊗ b` for row-major `dst: [a.len(), b.len()]`.
fn outer_add<T: Scalar>(dst: &mut [T], a: &[T], b: &[T]) {
    let n = b.len();
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut dst[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += ai * b[j];
        }
    }
}
