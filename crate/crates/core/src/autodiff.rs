//! Minimal tape-based reverse-mode automatic differentiation over dense
//! `f64` matrices.
//!
//! Every value is a 2-D matrix; vectors are stored as `1 × n` rows or
//! `n × 1` columns and scalars as `1 × 1`. A [`Graph`] records operations in
//! creation order, so a single reverse sweep from the loss is a valid
//! topological traversal.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};

use crate::params::{ParamId, ParamStore};

pub type Tensor = Array2<f64>;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNormRows {
        input: Var,
        inv_std: Vec<f64>,
    },
    L2NormalizeRows {
        input: Var,
        norms: Vec<f64>,
    },
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        gold: usize,
        probs: Vec<f64>,
    },
    JsDivergence {
        p: Var,
        q: Var,
        grad_p: Vec<f64>,
        grad_q: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<HashMap<ParamId, Var>>,
    frozen: bool,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-12;
const NORM_FLOOR: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph on which parameters bind as constants, for passes that only
    /// need values or gradients with respect to explicit variables.
    pub fn frozen() -> Self {
        Self {
            frozen: true,
            ..Self::default()
        }
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives gradients.
    pub fn variable(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a stored parameter as a leaf, reusing the same leaf on repeated
    /// calls within this graph.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.bound.borrow().get(&id) {
            return *v;
        }
        let value = store.value(id).clone();
        let v = if self.frozen {
            self.constant(value)
        } else {
            self.variable(value)
        };
        self.bound.borrow_mut().insert(id, v);
        v
    }

    /// Parameters bound on this graph, with their leaf handles.
    pub fn bound_params(&self) -> Vec<(ParamId, Var)> {
        let mut out: Vec<_> = self.bound.borrow().iter().map(|(k, v)| (*k, *v)).collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.len(), 1);
        t[[0, 0]]
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.value(a), self.value(b));
            check_broadcast(x.dim(), y.dim(), "add");
            &*x + &*y
        };
        self.push(value, Op::Add(a, b), self.rg(a) || self.rg(b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.value(a), self.value(b));
            check_broadcast(x.dim(), y.dim(), "sub");
            &*x - &*y
        };
        self.push(value, Op::Sub(a, b), self.rg(a) || self.rg(b))
    }

    /// Elementwise product; `b` may broadcast as a row, a column or a scalar.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let (x, y) = (self.value(a), self.value(b));
            check_broadcast(x.dim(), y.dim(), "mul");
            &*x * &*y
        };
        self.push(value, Op::Mul(a, b), self.rg(a) || self.rg(b))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = &*self.value(a) * c;
        self.push(value, Op::Scale(a, c), self.rg(a))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&*self.value(b));
        self.push(value, Op::MatMul(a, b), self.rg(a) || self.rg(b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b), self.rg(a) || self.rg(b))
    }

    pub fn transpose(&self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a), self.rg(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a), self.rg(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.value(a).mapv(logistic);
        self.push(value, Op::Sigmoid(a), self.rg(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(value, Op::Gelu(a), self.rg(a))
    }

    pub fn softmax_rows(&self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let p = softmax(row.as_slice().expect("row-major"));
            row.assign(&ndarray::ArrayView1::from(&p));
        }
        self.push(value, Op::SoftmaxRows(a), self.rg(a))
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm_rows(&self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let mut inv_std = Vec::with_capacity(value.nrows());
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) * is);
            inv_std.push(is);
        }
        self.push(value, Op::LayerNormRows { input: a, inv_std }, self.rg(a))
    }

    /// Scales every row to unit L2 norm.
    pub fn l2_normalize_rows(&self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let mut norms = Vec::with_capacity(value.nrows());
        for mut row in value.rows_mut() {
            let n = row.dot(&row).sqrt().max(NORM_FLOOR);
            row.mapv_inplace(|x| x / n);
            norms.push(n);
        }
        self.push(value, Op::L2NormalizeRows { input: a, norms }, self.rg(a))
    }

    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        self.push(value, Op::GatherRows(a, idx.to_vec()), self.rg(a))
    }

    pub fn row(&self, a: Var, i: usize) -> Var {
        self.gather_rows(a, &[i])
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let value = {
            let vals: Vec<_> = parts.iter().map(|p| self.value(*p)).collect();
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(0), &views).expect("concat_rows: column mismatch")
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let value = {
            let vals: Vec<_> = parts.iter().map(|p| self.value(*p)).collect();
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(1), &views).expect("concat_cols: row mismatch")
        };
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols(a, start, len), self.rg(a))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::Sum(a), self.rg(a))
    }

    /// Sum of several scalar nodes.
    pub fn add_all(&self, parts: &[Var]) -> Var {
        match parts {
            [] => self.constant(Array2::zeros((1, 1))),
            [first, rest @ ..] => rest.iter().fold(*first, |acc, p| self.add(acc, *p)),
        }
    }

    /// `−log softmax(logits)[gold]` over all entries of `logits`.
    pub fn cross_entropy(&self, logits: Var, gold: usize) -> Var {
        let (loss, probs) = {
            let x = self.value(logits);
            let flat: Vec<f64> = x.iter().copied().collect();
            assert!(
                gold < flat.len(),
                "gold index {gold} out of range {}",
                flat.len()
            );
            let lse = log_sum_exp(&flat);
            let probs: Vec<f64> = flat.iter().map(|v| (v - lse).exp()).collect();
            (lse - flat[gold], probs)
        };
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                gold,
                probs,
            },
            self.rg(logits),
        )
    }

    /// Jensen-Shannon divergence (natural log) between `softmax(p)` and
    /// `softmax(q)`, both flattened.
    pub fn js_divergence(&self, p: Var, q: Var) -> Var {
        let (value, grad_p, grad_q) = {
            let (x, y) = (self.value(p), self.value(q));
            assert_eq!(x.len(), y.len(), "js_divergence: length mismatch");
            let xs: Vec<f64> = x.iter().copied().collect();
            let ys: Vec<f64> = y.iter().copied().collect();
            js_with_grads(&xs, &ys)
        };
        self.push(
            Array2::from_elem((1, 1), value),
            Op::JsDivergence {
                p,
                q,
                grad_p,
                grad_q,
            },
            self.rg(p) || self.rg(q),
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        assert_eq!(nodes[loss.0].value.len(), 1, "backward from a non-scalar");
        grads[loss.0] = Some(Array2::ones(nodes[loss.0].value.dim()));

        for i in (0..n).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                grads[i] = Some(gout);
                continue;
            }
            let mut acc = |v: Var, g: Tensor| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => *existing += &g,
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    acc(*b, reduce_to(&gout, nodes[b.0].value.dim()));
                    acc(*a, reduce_to(&gout, nodes[a.0].value.dim()));
                }
                Op::Sub(a, b) => {
                    acc(*b, -reduce_to(&gout, nodes[b.0].value.dim()));
                    acc(*a, reduce_to(&gout, nodes[a.0].value.dim()));
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(*a, reduce_to(&(&gout * y), x.dim()));
                    acc(*b, reduce_to(&(&gout * x), y.dim()));
                }
                Op::Scale(a, c) => acc(*a, &gout * *c),
                Op::MatMul(a, b) => {
                    let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(*a, gout.dot(&y.t()));
                    acc(*b, x.t().dot(&gout));
                }
                Op::MatMulT(a, b) => {
                    let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
                    acc(*a, gout.dot(y));
                    acc(*b, gout.t().dot(x));
                }
                Op::Transpose(a) => acc(*a, gout.t().to_owned()),
                Op::Relu(a) => {
                    let x = &nodes[a.0].value;
                    let mut g = gout;
                    g.zip_mut_with(x, |g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    acc(*a, g);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let mut g = gout;
                    g.zip_mut_with(y, |g, &y| *g *= y * (1.0 - y));
                    acc(*a, g);
                }
                Op::Gelu(a) => {
                    let x = &nodes[a.0].value;
                    let mut g = gout;
                    g.zip_mut_with(x, |g, &x| *g *= gelu_grad(x));
                    acc(*a, g);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = gout;
                    for (mut grow, yrow) in g.rows_mut().into_iter().zip(y.rows()) {
                        let dot = grow.dot(&yrow);
                        grow.zip_mut_with(&yrow, |g, &y| *g = y * (*g - dot));
                    }
                    acc(*a, g);
                }
                Op::LayerNormRows { input, inv_std } => {
                    let y = &node.value;
                    let mut g = gout;
                    for ((mut grow, yrow), is) in
                        g.rows_mut().into_iter().zip(y.rows()).zip(inv_std)
                    {
                        let n = grow.len() as f64;
                        let mean_g = grow.sum() / n;
                        let mean_gy = grow.dot(&yrow) / n;
                        grow.zip_mut_with(&yrow, |g, &y| *g = is * (*g - mean_g - y * mean_gy));
                    }
                    acc(*input, g);
                }
                Op::L2NormalizeRows { input, norms } => {
                    let y = &node.value;
                    let mut g = gout;
                    for ((mut grow, yrow), n) in g.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                        let dot = grow.dot(&yrow);
                        grow.zip_mut_with(&yrow, |g, &y| *g = (*g - y * dot) / n);
                    }
                    acc(*input, g);
                }
                Op::GatherRows(a, idx) => {
                    let mut g = Array2::zeros(nodes[a.0].value.dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut dst = g.row_mut(src);
                        dst += &gout.row(r);
                    }
                    acc(*a, g);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let rows = nodes[p.0].value.nrows();
                        acc(*p, gout.slice(s![off..off + rows, ..]).to_owned());
                        off += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = nodes[p.0].value.ncols();
                        acc(*p, gout.slice(s![.., off..off + cols]).to_owned());
                        off += cols;
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let mut g = Array2::zeros(nodes[a.0].value.dim());
                    g.slice_mut(s![.., *start..*start + *len]).assign(&gout);
                    acc(*a, g);
                }
                Op::Sum(a) => {
                    let c = gout[[0, 0]];
                    acc(*a, Array2::from_elem(nodes[a.0].value.dim(), c));
                }
                Op::CrossEntropy {
                    logits,
                    gold,
                    probs,
                } => {
                    let c = gout[[0, 0]];
                    let dim = nodes[logits.0].value.dim();
                    let mut flat = probs.clone();
                    flat[*gold] -= 1.0;
                    let g = Array2::from_shape_vec(dim, flat).expect("shape") * c;
                    acc(*logits, g);
                }
                Op::JsDivergence {
                    p,
                    q,
                    grad_p,
                    grad_q,
                } => {
                    let c = gout[[0, 0]];
                    let gp = Array2::from_shape_vec(nodes[p.0].value.dim(), grad_p.clone())
                        .expect("shape")
                        * c;
                    let gq = Array2::from_shape_vec(nodes[q.0].value.dim(), grad_q.clone())
                        .expect("shape")
                        * c;
                    acc(*p, gp);
                    acc(*q, gq);
                }
            }
        }
        Gradients { grads }
    }
}

fn check_broadcast(a: (usize, usize), b: (usize, usize), op: &str) {
    let ok = a == b || b == (1, 1) || (b.0 == 1 && b.1 == a.1) || (b.1 == 1 && b.0 == a.0);
    assert!(ok, "{op}: cannot broadcast {b:?} onto {a:?}");
}

/// Sums `g` down to `shape` along broadcast axes.
fn reduce_to(g: &Tensor, shape: (usize, usize)) -> Tensor {
    if g.dim() == shape {
        return g.clone();
    }
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

/// JS divergence of two logit vectors and its gradients w.r.t. each.
fn js_with_grads(p: &[f64], q: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let lp = log_softmax(p);
    let lq = log_softmax(q);
    let mut value = 0.0;
    // d JS / d P_i = ½ log(P_i / M_i), likewise for Q.
    let mut dp = Vec::with_capacity(p.len());
    let mut dq = Vec::with_capacity(q.len());
    for (&a, &b) in lp.iter().zip(&lq) {
        let hi = a.max(b);
        let lm = hi + (0.5 * ((a - hi).exp() + (b - hi).exp())).ln();
        value += 0.5 * a.exp() * (a - lm) + 0.5 * b.exp() * (b - lm);
        dp.push(0.5 * (a - lm));
        dq.push(0.5 * (b - lm));
    }
    let through_softmax = |logp: &[f64], d: &[f64]| -> Vec<f64> {
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let mean: f64 = probs.iter().zip(d).map(|(p, g)| p * g).sum();
        probs.iter().zip(d).map(|(p, g)| p * (g - mean)).collect()
    };
    (
        value.max(0.0),
        through_softmax(&lp, &dp),
        through_softmax(&lq, &dq),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    /// Compares analytic gradients of a scalar-valued `f` against central
    /// differences at every input entry.
    fn check(inputs: Vec<Tensor>, f: impl Fn(&Graph, &[Var]) -> Var) {
        let eval = |xs: &[Tensor]| {
            let g = Graph::new();
            let vars: Vec<Var> = xs.iter().map(|x| g.variable(x.clone())).collect();
            let out = f(&g, &vars);
            g.scalar(out)
        };
        let g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.variable(x.clone())).collect();
        let out = f(&g, &vars);
        let grads = g.backward(out);
        let h = 1e-6;
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(inputs[k].dim()));
            for idx in 0..inputs[k].len() {
                let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic[[r, c]];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "input {k} [{r},{c}]: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    /// Random weighted sum so every output entry matters.
    fn project(g: &Graph, x: Var, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, c) = g.shape(x);
        let w = g.constant(rand_tensor(r, c, &mut rng));
        g.sum(g.mul(x, w))
    }

    #[test]
    fn elementwise_and_broadcast_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(3, 4, &mut rng);
        for b_shape in [(3, 4), (1, 4), (3, 1), (1, 1)] {
            let b = rand_tensor(b_shape.0, b_shape.1, &mut rng);
            check(vec![a.clone(), b.clone()], |g, v| {
                project(g, g.add(v[0], v[1]), 2)
            });
            check(vec![a.clone(), b.clone()], |g, v| {
                project(g, g.sub(v[0], v[1]), 3)
            });
            check(vec![a.clone(), b], |g, v| project(g, g.mul(v[0], v[1]), 4));
        }
        check(vec![a.clone()], |g, v| project(g, g.scale(v[0], -2.5), 5));
        check(vec![a.clone()], |g, v| project(g, g.sigmoid(v[0]), 6));
        check(vec![a.clone()], |g, v| project(g, g.gelu(v[0]), 7));
        check(vec![a + 0.05], |g, v| project(g, g.relu(v[0]), 8));
    }

    #[test]
    fn matrix_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_tensor(3, 4, &mut rng);
        let b = rand_tensor(4, 2, &mut rng);
        let c = rand_tensor(5, 4, &mut rng);
        check(vec![a.clone(), b], |g, v| {
            project(g, g.matmul(v[0], v[1]), 1)
        });
        check(vec![a.clone(), c.clone()], |g, v| {
            project(g, g.matmul_t(v[0], v[1]), 2)
        });
        check(vec![a.clone()], |g, v| project(g, g.transpose(v[0]), 3));
        check(vec![a.clone(), c.clone()], |g, v| {
            project(g, g.concat_rows(&[v[0], v[1], v[0]]), 4)
        });
        check(vec![a.clone(), rand_tensor(3, 2, &mut rng)], |g, v| {
            project(g, g.concat_cols(&[v[1], v[0]]), 5)
        });
        check(vec![a.clone()], |g, v| {
            project(g, g.slice_cols(v[0], 1, 2), 6)
        });
        check(vec![c], |g, v| {
            project(g, g.gather_rows(v[0], &[4, 0, 4, 2]), 7)
        });
        check(vec![a], |g, v| {
            g.add_all(&[g.sum(v[0]), g.sum(g.row(v[0], 1))])
        });
    }

    #[test]
    fn normalizations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_tensor(3, 5, &mut rng);
        check(vec![a.clone()], |g, v| project(g, g.softmax_rows(v[0]), 1));
        check(vec![a.clone()], |g, v| {
            project(g, g.layer_norm_rows(v[0]), 2)
        });
        check(vec![a], |g, v| project(g, g.l2_normalize_rows(v[0]), 3));
    }

    #[test]
    fn losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = rand_tensor(5, 1, &mut rng);
        let q = rand_tensor(5, 1, &mut rng);
        check(vec![p.clone()], |g, v| g.cross_entropy(v[0], 3));
        check(vec![p.clone(), q.clone()], |g, v| {
            g.js_divergence(v[0], v[1])
        });
        check(vec![p * 4.0, q * 4.0], |g, v| g.js_divergence(v[0], v[1]));
    }

    #[test]
    fn softmax_helpers() {
        let xs = [1000.0, 1000.0, -1000.0];
        assert!((log_sum_exp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-9);
        let p = softmax(&xs);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }

    #[test]
    fn frozen_graph_binds_constants() {
        let mut ps = ParamStore::new();
        let id = ps.ones("w", 2, 2);
        let g = Graph::frozen();
        let w = g.param(&ps, id);
        assert_eq!(w, g.param(&ps, id));
        let out = g.sum(g.mul(w, w));
        let grads = g.backward(out);
        assert!(grads.get(w).is_none());
        let live = Graph::new();
        let w = live.param(&ps, id);
        let out = live.sum(live.mul(w, w));
        assert_eq!(
            live.backward(out).get(w).unwrap(),
            &Array2::<f64>::from_elem((2, 2), 2.0)
        );
    }
}
