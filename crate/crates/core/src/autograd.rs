//! A small reverse-mode automatic differentiation tape over dense `f64` matrices.
//!
//! Every value on the tape is a 2-D [`Array2`]; vectors are represented as `1×n` rows.
//! Nodes are appended in evaluation order, so a single reverse sweep over the node list
//! is a valid topological traversal for [`Graph::backward`].
//!
//! Named parameters are bound once per graph through [`Graph::param`]; repeated lookups of
//! the same name return the same leaf, so weights shared across time steps (recurrences,
//! convolution taps) accumulate their gradient in one place.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

use crate::params::ParamSet;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    SumRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Vec<Option<usize>>),
    GatherCols(Var, Vec<usize>),
    SoftmaxRows(Var),
    LayerNormRows(Var, f64),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f64>>>,
    params: HashMap<String, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant leaf; no gradient is propagated into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient.
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Bind a named parameter from `set` (at most once per graph).
    pub fn param(&mut self, set: &ParamSet, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let value = set
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not registered"))
            .clone();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn grad(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of every bound parameter after [`Graph::backward`].
    pub fn param_grads(&self) -> Vec<(String, Array2<f64>)> {
        let mut out: Vec<(String, Array2<f64>)> = self
            .params
            .iter()
            .map(|(name, &v)| {
                let g = self
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(self.shape(v)));
                (name.clone(), g)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul: shape mismatch");
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// `a + row`, with the `1×n` row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "add_row: bias shape mismatch");
        let value = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::AddRow(a, row), rg)
    }

    /// `a ∘ row`, with the `1×n` row broadcast over every row of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.shape(a);
        assert_eq!(self.shape(row), (1, n), "mul_row: gain shape mismatch");
        let value = self.value(a) * self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(value, Op::MulRow(a, row), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).mapv(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Sum of all entries as a `1×1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums as a `1×n` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(value, Op::SumRows(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.nrows(), rows, "concat_cols: row mismatch");
            value.slice_mut(s![.., at..at + v.ncols()]).assign(v);
            at += v.ncols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.shape(parts[0]).1;
        let rows: usize = parts.iter().map(|&p| self.shape(p).0).sum();
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.ncols(), cols, "stack_rows: column mismatch");
            value.slice_mut(s![at..at + v.nrows(), ..]).assign(v);
            at += v.nrows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::StackRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceCols(a, start, len), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let rg = self.rg(a);
        self.push(value, Op::SliceRows(a, start, len), rg)
    }

    /// Row gather; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, index: Vec<Option<usize>>) -> Var {
        let src = self.value(a);
        let mut value = Array2::zeros((index.len(), src.ncols()));
        for (dst, i) in index.iter().enumerate() {
            if let Some(i) = *i {
                value.row_mut(dst).assign(&src.row(i));
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::GatherRows(a, index), rg)
    }

    pub fn gather_cols(&mut self, a: Var, index: Vec<usize>) -> Var {
        let src = self.value(a);
        let mut value = Array2::zeros((src.nrows(), index.len()));
        for (dst, &i) in index.iter().enumerate() {
            value.column_mut(dst).assign(&src.column(i));
        }
        let rg = self.rg(a);
        self.push(value, Op::GatherCols(a, index), rg)
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let z = row.sum();
            row.mapv_inplace(|x| x / z);
        }
        let rg = self.rg(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)` without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.fold(0.0, |acc, &x| acc + (x - mean) * (x - mean)) / n;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|x| (x - mean) * inv);
        }
        let rg = self.rg(a);
        self.push(value, Op::LayerNormRows(a, eps), rg)
    }

    fn accumulate(&mut self, v: Var, g: Array2<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse sweep from a scalar `1×1` output.
    pub fn backward(&mut self, output: Var) {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=output.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &g);
            self.grads[idx] = Some(g);
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, g: &Array2<f64>) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(a) {
                    let ga = g.dot(&self.value(b).t());
                    self.accumulate(a, ga);
                }
                if self.rg(b) {
                    let gb = self.value(a).t().dot(g);
                    self.accumulate(b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, -g);
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    let ga = g * self.value(b);
                    self.accumulate(a, ga);
                }
                if self.rg(b) {
                    let gb = g * self.value(a);
                    self.accumulate(b, gb);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(a, g.clone());
                if self.rg(row) {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(row, gr);
                }
            }
            Op::MulRow(a, row) => {
                if self.rg(a) {
                    let ga = g * self.value(row);
                    self.accumulate(a, ga);
                }
                if self.rg(row) {
                    let gr = (g * self.value(a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(row, gr);
                }
            }
            Op::Scale(a, c) => self.accumulate(a, g * c),
            Op::AddScalar(a) => self.accumulate(a, g.clone()),
            Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                self.accumulate(a, ga);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[idx].value;
                let ga = g * &y.mapv(|y| 1.0 - y * y);
                self.accumulate(a, ga);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                let ga = g * &y.mapv(|y| y * (1.0 - y));
                self.accumulate(a, ga);
            }
            Op::Abs(a) => {
                let ga = g * &self.value(a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                self.accumulate(a, ga);
            }
            Op::Sqrt(a) => {
                let y = &self.nodes[idx].value;
                let ga = g * &y.mapv(|y| if y > 0.0 { 0.5 / y } else { 0.0 });
                self.accumulate(a, ga);
            }
            Op::Square(a) => {
                let ga = g * &self.value(a).mapv(|x| 2.0 * x);
                self.accumulate(a, ga);
            }
            Op::Sum(a) => {
                let ga = Array2::from_elem(self.shape(a), g[[0, 0]]);
                self.accumulate(a, ga);
            }
            Op::SumRows(a) => {
                let (rows, _) = self.shape(a);
                let ga = g
                    .broadcast((rows, g.ncols()))
                    .expect("broadcast column sums")
                    .to_owned();
                self.accumulate(a, ga);
            }
            Op::Transpose(a) => self.accumulate(a, g.t().to_owned()),
            Op::ConcatCols(ref parts) => {
                let mut at = 0;
                for &p in parts {
                    let n = self.shape(p).1;
                    if self.rg(p) {
                        let gp = g.slice(s![.., at..at + n]).to_owned();
                        self.accumulate(p, gp);
                    }
                    at += n;
                }
            }
            Op::StackRows(ref parts) => {
                let mut at = 0;
                for &p in parts {
                    let n = self.shape(p).0;
                    if self.rg(p) {
                        let gp = g.slice(s![at..at + n, ..]).to_owned();
                        self.accumulate(p, gp);
                    }
                    at += n;
                }
            }
            Op::SliceCols(a, start, len) => {
                if self.rg(a) {
                    let mut ga = Array2::zeros(self.shape(a));
                    ga.slice_mut(s![.., start..start + len]).assign(g);
                    self.accumulate(a, ga);
                }
            }
            Op::SliceRows(a, start, len) => {
                if self.rg(a) {
                    let mut ga = Array2::zeros(self.shape(a));
                    ga.slice_mut(s![start..start + len, ..]).assign(g);
                    self.accumulate(a, ga);
                }
            }
            Op::GatherRows(a, ref index) => {
                if self.rg(a) {
                    let mut ga = Array2::zeros(self.shape(a));
                    for (dst, i) in index.iter().enumerate() {
                        if let Some(i) = *i {
                            let mut row = ga.row_mut(i);
                            row += &g.row(dst);
                        }
                    }
                    self.accumulate(a, ga);
                }
            }
            Op::GatherCols(a, ref index) => {
                if self.rg(a) {
                    let mut ga = Array2::zeros(self.shape(a));
                    for (dst, &i) in index.iter().enumerate() {
                        let mut col = ga.column_mut(i);
                        col += &g.column(dst);
                    }
                    self.accumulate(a, ga);
                }
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut ga = Array2::zeros(y.dim());
                for ((mut out, yr), gr) in ga.rows_mut().into_iter().zip(y.rows()).zip(g.rows()) {
                    let dot = yr.dot(&gr);
                    Zip::from(&mut out)
                        .and(&yr)
                        .and(&gr)
                        .for_each(|o, &y, &g| *o = y * (g - dot));
                }
                self.accumulate(a, ga);
            }
            Op::LayerNormRows(a, eps) => {
                let y = &self.nodes[idx].value;
                let x = self.value(a);
                let mut ga = Array2::zeros(y.dim());
                for (((mut out, yr), gr), xr) in ga
                    .rows_mut()
                    .into_iter()
                    .zip(y.rows())
                    .zip(g.rows())
                    .zip(x.rows())
                {
                    let n = xr.len() as f64;
                    let mean = xr.sum() / n;
                    let var = xr.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = gr.sum() / n;
                    let gy_mean = gr.dot(&yr) / n;
                    Zip::from(&mut out)
                        .and(&yr)
                        .and(&gr)
                        .for_each(|o, &y, &g| *o = inv * (g - g_mean - y * gy_mean));
                }
                self.accumulate(a, ga);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Central finite-difference gradient of a scalar function of one matrix.
///
/// Test-facing helper used by gradient checks; it never touches the tape.
pub fn finite_difference(
    x: &Array2<f64>,
    step: f64,
    mut f: impl FnMut(&Array2<f64>) -> f64,
) -> Array2<f64> {
    let mut grad = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + step;
        let up = f(&probe);
        probe[[r, c]] = orig - step;
        let down = f(&probe);
        probe[[r, c]] = orig;
        grad[[r, c]] = (up - down) / (2.0 * step);
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)` in the Frobenius norm.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let na = a.mapv(|x| x * x).sum().sqrt();
    let nb = b.mapv(|x| x * x).sum().sqrt();
    diff / na.max(nb).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn check(x: Array2<f64>, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let out = build(&mut g, xv);
        g.backward(out);
        let analytic = g.grad(xv).cloned().unwrap_or_else(|| Array2::zeros(x.dim()));
        let numeric = finite_difference(&x, 1e-6, |p| {
            let mut g = Graph::new();
            let xv = g.input(p.clone());
            let out = build(&mut g, xv);
            g.scalar(out)
        });
        let err = relative_error(&analytic, &numeric, 1e-8);
        assert!(err < 1e-6, "gradient mismatch: rel err {err}");
    }

    #[test]
    fn matmul_and_elementwise_gradients() {
        let w = random(4, 3, 2);
        check(random(5, 4, 1), move |g, x| {
            let w = g.constant(w.clone());
            let y = g.matmul(x, w);
            let y = g.tanh(y);
            let z = g.square(y);
            g.sum(z)
        });
    }

    #[test]
    fn softmax_and_layer_norm_gradients() {
        let probe = random(3, 6, 4);
        check(random(3, 6, 3), move |g, x| {
            let s = g.softmax_rows(x);
            let n = g.layer_norm_rows(x, 1e-5);
            let p = g.constant(probe.clone());
            let a = g.mul(s, p);
            let b = g.mul(n, p);
            let a = g.sum(a);
            let b = g.sum(b);
            g.add(a, b)
        });
    }

    #[test]
    fn structural_op_gradients() {
        let probe = random(4, 5, 6);
        check(random(4, 3, 5), move |g, x| {
            let t = g.transpose(x);
            let tt = g.transpose(t);
            let shifted = g.gather_rows(tt, vec![None, Some(0), Some(1), Some(3)]);
            let cols = g.gather_cols(x, vec![2, 0]);
            let joined = g.concat_cols(&[shifted, cols]);
            let p = g.constant(probe.clone());
            let y = g.mul(joined, p);
            let y = g.sigmoid(y);
            let top = g.slice_rows(y, 0, 2);
            let bottom = g.slice_rows(y, 2, 2);
            let stacked = g.stack_rows(&[bottom, top]);
            let c = g.slice_cols(stacked, 1, 3);
            let r = g.sum_rows(c);
            let r = g.square(r);
            g.sum(r)
        });
    }

    #[test]
    fn broadcast_row_gradients() {
        let a = random(4, 3, 8);
        check(random(1, 3, 7), move |g, row| {
            let a = g.constant(a.clone());
            let y = g.add_row(a, row);
            let y = g.mul_row(y, row);
            let y = g.abs(y);
            let y = g.add_scalar(y, 1.0);
            let y = g.sqrt(y);
            let y = g.scale(y, 0.5);
            g.mean(y)
        });
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut set = ParamSet::default();
        set.insert("w", array![[2.0]]);
        let mut g = Graph::new();
        let a = g.param(&set, "w");
        let b = g.param(&set, "w");
        assert_eq!(a, b);
        let y = g.mul(a, b);
        let y = g.sum(y);
        g.backward(y);
        assert_eq!(g.param_grads()[0].1[[0, 0]], 4.0);
    }

    #[test]
    fn relu_blocks_negative_inputs() {
        let mut g = Graph::new();
        let x = g.input(array![[-1.0, 2.0]]);
        let y = g.relu(x);
        let s = g.sum(y);
        g.backward(s);
        assert_eq!(g.grad(x).unwrap(), &array![[0.0, 1.0]]);
    }
}
