//! Reverse-mode differentiation over batched row-major tensors.
//!
//! Operations are appended to a [`GradientTape`] as they execute, so node order
//! is already a topological order. [`GradientTape::backward`] walks the record
//! from the loss node down to the first node, visiting each operation once,
//! then adds the resulting adjoints into the gradient buffers of the trainable
//! parameters that were read onto the tape.

use super::params::{ParamId, ParamStore};
use super::scalar;
use super::tensor::Tensor;
use crate::error::{shape_err, ClefError, Result};

/// Handle to a value recorded on a [`GradientTape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    /// Leaf whose adjoint is tracked but which is not a stored parameter.
    Variable,
    Param(ParamId),
    /// `x · wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[n, k] + [k]`, the row vector broadcast over every row.
    AddRow(Var, Var),
    Concat(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Log1mExp(Var),
    Exp(Var),
    LogSoftmax(Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    /// `Σ cᵢ xᵢ` against a constant weight vector.
    Dot(Var, Vec<f64>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Variable | Op::Param(_) => vec![],
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::Concat(a, b) => {
                vec![*a, *b]
            }
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Log1mExp(a)
            | Op::Exp(a)
            | Op::LogSoftmax(a)
            | Op::Scale(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Dot(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    dims: Vec<usize>,
    values: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Adjoints produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    ops_visited: usize,
}

impl Gradients {
    /// Adjoint of `var`, or `None` if the loss does not depend on it.
    pub fn of(&self, var: Var) -> Option<&[f64]> {
        self.adjoints.get(var.0).and_then(|a| a.as_deref())
    }

    /// Number of non-leaf operations processed during the sweep.
    pub fn ops_visited(&self) -> usize {
        self.ops_visited
    }
}

/// Ordered record of primitive operations for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
    relu_margin: f64,
}

impl GradientTape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            relu_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest `|x|` fed to any ReLU so far. Finite-difference checks use this
    /// to avoid evaluating across the kink.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }

    fn push(&mut self, dims: Vec<usize>, values: Vec<f64>, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Variable => true,
            Op::Param(_) => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            dims,
            values,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).values
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        &self.node(v).dims
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.dims.clone(), n.values.clone()).expect("tape nodes are well formed")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let vals = self.value(v);
        debug_assert_eq!(vals.len(), 1);
        vals[0]
    }

    fn last(&self, v: Var) -> usize {
        *self.node(v).dims.last().expect("non-empty dims")
    }

    fn rows(&self, v: Var) -> usize {
        self.node(v).values.len() / self.last(v)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.dims().to_vec(), t.values().to_vec(), Op::Constant)
    }

    pub fn constant_from(&mut self, dims: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(dims, values)?;
        Ok(self.push(t.dims().to_vec(), t.into_values(), Op::Constant))
    }

    /// Leaf with a tracked adjoint, for differentiating w.r.t. inputs.
    pub fn variable(&mut self, t: &Tensor) -> Var {
        self.push(t.dims().to_vec(), t.values().to_vec(), Op::Variable)
    }

    /// Reads a stored parameter onto the tape. Frozen parameters are recorded
    /// as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        let op = if t.requires_grad() {
            Op::Param(id)
        } else {
            Op::Constant
        };
        self.push(t.dims().to_vec(), t.values().to_vec(), op)
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (dims, values) = (n.dims.clone(), n.values.clone());
        self.push(dims, values, Op::Constant)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (wd, bd) = (self.dims(w).to_vec(), self.dims(b).to_vec());
        if wd.len() != 2 || bd.len() != 1 || bd[0] != wd[0] {
            return shape_err(format!("affine weight {wd:?} / bias {bd:?} inconsistent"));
        }
        let (out, inp) = (wd[0], wd[1]);
        if self.last(x) != inp {
            return shape_err(format!(
                "input last dim {} does not match layer in-width {inp}",
                self.last(x)
            ));
        }
        let n = self.rows(x);
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let mut y = Vec::with_capacity(n * out);
        for r in 0..n {
            let xr = &xv[r * inp..(r + 1) * inp];
            for o in 0..out {
                let wr = &wv[o * inp..(o + 1) * inp];
                y.push(bv[o] + dot(xr, wr));
            }
        }
        let mut dims = self.dims(x).to_vec();
        *dims.last_mut().unwrap() = out;
        Ok(self.push(dims, y, Op::Affine { x, w, b }))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return shape_err(format!("{what}: {:?} vs {:?}", self.dims(a), self.dims(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let values = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let dims = self.dims(a).to_vec();
        self.push(dims, values, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let values = self.value(a).iter().map(|&x| f(x)).collect();
        let dims = self.dims(a).to_vec();
        self.push(dims, values, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let k = self.last(a);
        if self.dims(row) != [k] {
            return shape_err(format!(
                "add_row: row {:?} does not broadcast over {:?}",
                self.dims(row),
                self.dims(a)
            ));
        }
        let rv = self.value(row);
        let values = self
            .value(a)
            .chunks(k)
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(x, r)| x + r))
            .collect();
        let dims = self.dims(a).to_vec();
        Ok(self.push(dims, values, Op::AddRow(a, row)))
    }

    /// Concatenates along the last dimension.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, p, q) = (self.rows(a), self.last(a), self.last(b));
        if self.rows(b) != n {
            return shape_err(format!("concat: {n} rows vs {} rows", self.rows(b)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut values = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            values.extend_from_slice(&av[r * p..(r + 1) * p]);
            values.extend_from_slice(&bv[r * q..(r + 1) * q]);
        }
        let mut dims = self.dims(a).to_vec();
        *dims.last_mut().unwrap() = p + q;
        Ok(self.push(dims, values, Op::Concat(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let margin = self
            .value(a)
            .iter()
            .fold(f64::INFINITY, |m, x| m.min(x.abs()));
        self.relu_margin = self.relu_margin.min(margin);
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), scalar::sigmoid)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::LogSigmoid(a), scalar::log_sigmoid)
    }

    /// `log(1 − eˣ)` for log-probabilities `x ≤ 0`.
    pub fn log1mexp(&mut self, a: Var) -> Var {
        self.map(a, Op::Log1mExp(a), scalar::log1mexp)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    /// Row-wise log-softmax over the last dimension.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let k = self.last(a);
        let values = self
            .value(a)
            .chunks(k)
            .flat_map(scalar::log_softmax)
            .collect();
        let dims = self.dims(a).to_vec();
        self.push(dims, values, Op::LogSoftmax(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let vals = self.value(a);
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        self.push(vec![1], vec![m], Op::Mean(a))
    }

    /// `Σ cᵢ aᵢ` with constant weights `c`.
    pub fn dot_const(&mut self, a: Var, c: Vec<f64>) -> Result<Var> {
        if c.len() != self.value(a).len() {
            return shape_err(format!(
                "dot_const: {} weights for {} values",
                c.len(),
                self.value(a).len()
            ));
        }
        let s = dot(self.value(a), &c);
        Ok(self.push(vec![1], vec![s], Op::Dot(a, c)))
    }

    /// Computes the adjoint of every node that `loss` depends on.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(ClefError::Contract(format!(
                "backward requires a scalar loss, got dims {:?}",
                self.dims(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        let mut ops_visited = 0;
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                adj[i] = Some(g);
                continue;
            }
            if !matches!(node.op, Op::Constant | Op::Variable | Op::Param(_)) {
                ops_visited += 1;
            }
            self.propagate(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        Ok(Gradients {
            adjoints: adj,
            ops_visited,
        })
    }

    /// Backpropagates `loss` and adds `∂loss/∂p` into the gradient buffer of
    /// every trainable parameter `p` read onto this tape.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.adjoints[i].as_deref()) {
                store.get_mut(*id).accumulate_grad(g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Constant | Op::Variable | Op::Param(_) => {}
            Op::Affine { x, w, b } => {
                let (out, inp) = (self.dims(*w)[0], self.last(*x));
                let n = self.rows(*x);
                let (xv, wv) = (self.value(*x), self.value(*w));
                if wants(x) {
                    let mut dx = vec![0.0; n * inp];
                    for r in 0..n {
                        let dxr = &mut dx[r * inp..(r + 1) * inp];
                        for o in 0..out {
                            let go = g[r * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            for (d, w) in dxr.iter_mut().zip(&wv[o * inp..(o + 1) * inp]) {
                                *d += go * w;
                            }
                        }
                    }
                    accumulate(adj, *x, &dx);
                }
                if wants(w) {
                    let mut dw = vec![0.0; out * inp];
                    for r in 0..n {
                        let xr = &xv[r * inp..(r + 1) * inp];
                        for o in 0..out {
                            let go = g[r * out + o];
                            if go == 0.0 {
                                continue;
                            }
                            for (d, xi) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xr) {
                                *d += go * xi;
                            }
                        }
                    }
                    accumulate(adj, *w, &dw);
                }
                if wants(b) {
                    accumulate(adj, *b, &column_sums(g, out));
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(adj, *a, g);
                }
                if wants(b) {
                    accumulate(adj, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(adj, *a, g);
                }
                if wants(b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(adj, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if wants(a) {
                    let d: Vec<f64> = g.iter().zip(bv).map(|(g, y)| g * y).collect();
                    accumulate(adj, *a, &d);
                }
                if wants(b) {
                    let d: Vec<f64> = g.iter().zip(av).map(|(g, x)| g * x).collect();
                    accumulate(adj, *b, &d);
                }
            }
            Op::AddRow(a, row) => {
                if wants(a) {
                    accumulate(adj, *a, g);
                }
                if wants(row) {
                    accumulate(adj, *row, &column_sums(g, self.last(*row)));
                }
            }
            Op::Concat(a, b) => {
                let (p, q) = (self.last(*a), self.last(*b));
                let n = self.rows(*a);
                if wants(a) {
                    let d: Vec<f64> = (0..n)
                        .flat_map(|r| g[r * (p + q)..r * (p + q) + p].iter().copied())
                        .collect();
                    accumulate(adj, *a, &d);
                }
                if wants(b) {
                    let d: Vec<f64> = (0..n)
                        .flat_map(|r| g[r * (p + q) + p..(r + 1) * (p + q)].iter().copied())
                        .collect();
                    accumulate(adj, *b, &d);
                }
            }
            Op::Relu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(adj, *a, &d);
            }
            Op::Sigmoid(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(&node.values)
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                accumulate(adj, *a, &d);
            }
            Op::LogSigmoid(a) => {
                // d/dx log σ(x) = σ(−x)
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(g, &x)| g * scalar::sigmoid(-x))
                    .collect();
                accumulate(adj, *a, &d);
            }
            Op::Log1mExp(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(g, &x)| g * scalar::log1mexp_derivative(x))
                    .collect();
                accumulate(adj, *a, &d);
            }
            Op::Exp(a) => {
                let d: Vec<f64> = g.iter().zip(&node.values).map(|(g, e)| g * e).collect();
                accumulate(adj, *a, &d);
            }
            Op::LogSoftmax(a) => {
                let k = self.last(*a);
                let mut d = Vec::with_capacity(g.len());
                for (gr, lr) in g.chunks(k).zip(node.values.chunks(k)) {
                    let total: f64 = gr.iter().sum();
                    d.extend(gr.iter().zip(lr).map(|(gi, li)| gi - li.exp() * total));
                }
                accumulate(adj, *a, &d);
            }
            Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|x| c * x).collect();
                accumulate(adj, *a, &d);
            }
            Op::Sum(a) => {
                let d = vec![g[0]; self.value(*a).len()];
                accumulate(adj, *a, &d);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let d = vec![g[0] / n as f64; n];
                accumulate(adj, *a, &d);
            }
            Op::Dot(a, c) => {
                let d: Vec<f64> = c.iter().map(|ci| ci * g[0]).collect();
                accumulate(adj, *a, &d);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column_sums(g: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for chunk in g.chunks(width) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
    match adj[v.0].as_mut() {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        None => adj[v.0] = Some(delta.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_vector_has_unit_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![1.0, 2.0]).with_grad());
        let mut tape = GradientTape::new();
        let wv = tape.param(&store, w);
        let loss = tape.sum(wv);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(w).grad().unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn log_sigmoid_gradient_at_zero_is_half() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![0.0]).with_grad());
        let mut tape = GradientTape::new();
        let wv = tape.param(&store, w);
        let ls = tape.log_sigmoid(wv);
        let loss = tape.dot_const(ls, vec![1.0]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert!((store.get(w).grad().unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![3.0]).with_grad());
        for _ in 0..3 {
            let mut tape = GradientTape::new();
            let wv = tape.param(&store, w);
            let sq = tape.mul(wv, wv).unwrap();
            let loss = tape.sum(sq);
            tape.backward(loss, &mut store).unwrap();
        }
        assert_eq!(store.get(w).grad().unwrap(), &[18.0]);
        store.zero_grad();
        assert_eq!(store.get(w).grad().unwrap(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![1.0, 2.0]).with_grad());
        let mut tape = GradientTape::new();
        let wv = tape.param(&store, w);
        let err = tape.backward(wv, &mut store).unwrap_err();
        assert!(matches!(err, ClefError::Contract(_)));
    }

    #[test]
    fn backward_leaves_forward_values_unchanged_and_visits_each_op_once() {
        let mut store = ParamStore::new();
        let w = store.insert(
            "w",
            Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25])
                .unwrap()
                .with_grad(),
        );
        let b = store.insert("b", Tensor::vector(vec![0.1, -0.2]).with_grad());
        let mut tape = GradientTape::new();
        let x = tape
            .constant_from(vec![3, 2], vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0])
            .unwrap();
        let (wv, bv) = (tape.param(&store, w), tape.param(&store, b));
        let h = tape.affine(x, wv, bv).unwrap();
        let a = tape.sigmoid(h);
        let l = tape.log_softmax(a);
        let loss = tape.mean(l);
        let before: Vec<Vec<f64>> = tape.nodes.iter().map(|n| n.values.clone()).collect();
        let grads = tape.backward(loss, &mut store).unwrap();
        let after: Vec<Vec<f64>> = tape.nodes.iter().map(|n| n.values.clone()).collect();
        assert_eq!(before, after);
        // affine, sigmoid, log_softmax, mean
        assert_eq!(grads.ops_visited(), 4);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![1.5]).with_grad());
        let mut tape = GradientTape::new();
        let wv = tape.param(&store, w);
        let d = tape.detach(wv);
        let sq = tape.mul(wv, d).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss, &mut store).unwrap();
        // only the live factor contributes: d(w·c)/dw = c
        assert_eq!(store.get(w).grad().unwrap(), &[1.5]);
    }

    #[test]
    fn shape_mismatches_are_reported() {
        let mut tape = GradientTape::new();
        let a = tape.constant(&Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(&Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, b), Err(ClefError::Shape(_))));
        let w = tape.constant(&Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let bias = tape.constant(&Tensor::vector(vec![0.0; 2]));
        assert!(matches!(tape.affine(a, w, bias), Err(ClefError::Shape(_))));
    }
}
