use std::sync::atomic::{AtomicU64, Ordering};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Guard added inside every logarithm and row normalization.
pub const LOG_EPS: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Hadamard(usize, usize),
    Transpose(usize),
    ConcatCols(usize, usize),
    AddRow(usize, usize),
    SoftmaxRows(usize),
    CrossEntropy(usize, Vec<usize>),
    Sum(usize),
    Relu(usize),
    NormalizeRows(usize),
    SqDist(usize, usize, f64),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of executed matrix operations for reverse-mode differentiation.
///
/// Leaves are either trainable parameters ([`Tape::param`]) or constants
/// ([`Tape::constant`]). Every operation checks shapes and rejects non-finite
/// results. A tape can be traversed backward exactly once.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar root with respect to every trainable leaf of a tape.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if `var` is not a trainable leaf of the
    /// tape these gradients came from.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.index).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Matrix, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf { trainable },
            requires_grad: trainable,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage("variable does not belong to this tape".into()));
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> Result<&Matrix> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v)?;
        if m.shape() != (1, 1) {
            return Err(Error::shape("scalar", m.shape(), (1, 1)));
        }
        Ok(m.values()[0])
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf { trainable } => *trainable,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::ConcatCols(a, b)
            | Op::AddRow(a, b)
            | Op::SqDist(a, b, _) => self.nodes[*a].requires_grad || self.nodes[*b].requires_grad,
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::SoftmaxRows(a)
            | Op::CrossEntropy(a, _)
            | Op::Sum(a)
            | Op::Relu(a)
            | Op::NormalizeRows(a) => self.nodes[*a].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.push(out, Op::MatMul(ia, ib), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "add", |x, y| x + y)?;
        self.push(out, Op::Add(ia, ib), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(ia, ib), "sub")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| c * x);
        self.push(out, Op::Scale(ia, c), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x + c);
        self.push(out, Op::AddScalar(ia), "add_scalar")
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "hadamard", |x, y| x * y)?;
        self.push(out, Op::Hadamard(ia, ib), "hadamard")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.transpose();
        self.push(out, Op::Transpose(ia), "transpose")
    }

    /// `[a | b]`, requires equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (ma, mb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if ma.rows() != mb.rows() {
            return Err(Error::shape("concat_cols", ma.shape(), mb.shape()));
        }
        let ca = ma.cols();
        let out = Matrix::from_fn(ma.rows(), ca + mb.cols(), |i, j| {
            if j < ca {
                ma.get(i, j)
            } else {
                mb.get(i, j - ca)
            }
        });
        self.push(out, Op::ConcatCols(ia, ib), "concat_cols")
    }

    /// Adds the 1×k row `r` to every row of the n×k matrix `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let (ia, ir) = (self.idx(a)?, self.idx(r)?);
        let (ma, mr) = (&self.nodes[ia].value, &self.nodes[ir].value);
        if mr.rows() != 1 || mr.cols() != ma.cols() {
            return Err(Error::shape("add_row", ma.shape(), mr.shape()));
        }
        let out = Matrix::from_fn(ma.rows(), ma.cols(), |i, j| ma.get(i, j) + mr.get(0, j));
        self.push(out, Op::AddRow(ia, ir), "add_row")
    }

    /// Softmax applied independently to each row, with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let m = &self.nodes[ia].value;
        if m.cols() == 0 || m.rows() == 0 {
            return Err(Error::shape("softmax_rows", m.shape(), (1, 1)));
        }
        let out = softmax_rows_value(m);
        self.push(out, Op::SoftmaxRows(ia), "softmax_rows")
    }

    /// Mean over rows of `-ln(probs[r][golds[r]] + 1e-12)`, as a 1×1 node.
    pub fn cross_entropy(&mut self, probs: Var, golds: &[usize]) -> Result<Var> {
        let ip = self.idx(probs)?;
        let m = &self.nodes[ip].value;
        if golds.len() != m.rows() || golds.is_empty() {
            return Err(Error::shape("cross_entropy", m.shape(), (golds.len(), 1)));
        }
        if let Some(&bad) = golds.iter().find(|&&g| g >= m.cols()) {
            return Err(Error::Index {
                op: "cross_entropy",
                index: bad,
                len: m.cols(),
            });
        }
        let total: f64 = golds
            .iter()
            .enumerate()
            .map(|(r, &g)| -(m.get(r, g) + LOG_EPS).ln())
            .sum();
        let out = Matrix::scalar(total / golds.len() as f64);
        self.push(out, Op::CrossEntropy(ip, golds.to_vec()), "cross_entropy")
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = Matrix::scalar(self.nodes[ia].value.sum());
        self.push(out, Op::Sum(ia), "sum")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.nodes[ia].value.map(|x| x.max(0.0));
        self.push(out, Op::Relu(ia), "relu")
    }

    /// Each row divided by `(‖row‖ + 1e-12)`.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let m = &self.nodes[ia].value;
        let norms: Vec<f64> = (0..m.rows()).map(|i| row_norm(m.row(i))).collect();
        let out = Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) / (norms[i] + LOG_EPS));
        self.push(out, Op::NormalizeRows(ia), "normalize_rows")
    }

    /// `out[b][i] = scale * ‖u_b − e_i‖²` for the rows of `u` (B×d) and `e` (C×d).
    pub fn sq_dist(&mut self, u: Var, e: Var, scale: f64) -> Result<Var> {
        let (iu, ie) = (self.idx(u)?, self.idx(e)?);
        let (mu, me) = (&self.nodes[iu].value, &self.nodes[ie].value);
        if mu.cols() != me.cols() {
            return Err(Error::shape("sq_dist", mu.shape(), me.shape()));
        }
        let out = Matrix::from_fn(mu.rows(), me.rows(), |b, i| {
            let d: f64 = mu.row(b).iter().zip(me.row(i)).map(|(x, y)| (x - y) * (x - y)).sum();
            scale * d
        });
        self.push(out, Op::SqDist(iu, ie, scale), "sq_dist")
    }

    /// Reverse sweep from the 1×1 node `root`. Consumes the tape: a second
    /// call is a usage error.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        let ir = self.idx(root)?;
        if self.consumed {
            return Err(Error::Usage("tape already traversed backward".into()));
        }
        let shape = self.nodes[ir].value.shape();
        if shape != (1, 1) {
            return Err(Error::Usage(format!("backward root must be 1x1, got {shape:?}")));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[ir] = Some(Matrix::scalar(1.0));

        for i in (0..=ir).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let needs = |j: usize| self.nodes[j].requires_grad;
            match &node.op {
                Op::Leaf { trainable } => {
                    if *trainable {
                        grads[i] = Some(g);
                    }
                }
                Op::MatMul(a, b) => {
                    if needs(*a) {
                        let bt = self.nodes[*b].value.transpose();
                        accumulate(&mut grads, *a, g.matmul(&bt)?);
                    }
                    if needs(*b) {
                        let at = self.nodes[*a].value.transpose();
                        accumulate(&mut grads, *b, at.matmul(&g)?);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.map(|x| c * x)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Hadamard(a, b) => {
                    if needs(*a) {
                        let ga = g.zip_map(&self.nodes[*b].value, "hadamard", |x, y| x * y)?;
                        accumulate(&mut grads, *a, ga);
                    }
                    if needs(*b) {
                        let gb = g.zip_map(&self.nodes[*a].value, "hadamard", |x, y| x * y)?;
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[*a].value.cols();
                    let cb = self.nodes[*b].value.cols();
                    if needs(*a) {
                        accumulate(&mut grads, *a, Matrix::from_fn(g.rows(), ca, |r, c| g.get(r, c)));
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, Matrix::from_fn(g.rows(), cb, |r, c| g.get(r, ca + c)));
                    }
                }
                Op::AddRow(a, r) => {
                    if needs(*r) {
                        let mut gr = Matrix::zeros(1, g.cols());
                        for row in 0..g.rows() {
                            for (acc, v) in gr.values_mut().iter_mut().zip(g.row(row)) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut grads, *r, gr);
                    }
                    if needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(gv, yv)| gv * yv).sum();
                        for c in 0..y.cols() {
                            ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::CrossEntropy(p, golds) => {
                    let probs = &self.nodes[*p].value;
                    let upstream = g.values()[0] / golds.len() as f64;
                    let mut gp = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, &gold) in golds.iter().enumerate() {
                        gp.set(r, gold, -upstream / (probs.get(r, gold) + LOG_EPS));
                    }
                    accumulate(&mut grads, *p, gp);
                }
                Op::Sum(a) => {
                    let s = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, Matrix::filled(s.rows(), s.cols(), g.values()[0]));
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(&self.nodes[*a].value, "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::NormalizeRows(a) => {
                    let x = &self.nodes[*a].value;
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let xr = x.row(r);
                        let gr = g.row(r);
                        let n = row_norm(xr);
                        let denom = n + LOG_EPS;
                        let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let coef = if n > 0.0 { dot / (n * denom * denom) } else { 0.0 };
                        for c in 0..x.cols() {
                            ga.set(r, c, gr[c] / denom - xr[c] * coef);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SqDist(u, e, scale) => {
                    let mu = &self.nodes[*u].value;
                    let me = &self.nodes[*e].value;
                    let mut gu = Matrix::zeros(mu.rows(), mu.cols());
                    let mut ge = Matrix::zeros(me.rows(), me.cols());
                    for b in 0..mu.rows() {
                        for i in 0..me.rows() {
                            let w = 2.0 * scale * g.get(b, i);
                            if w == 0.0 {
                                continue;
                            }
                            for k in 0..mu.cols() {
                                let diff = mu.get(b, k) - me.get(i, k);
                                gu.values_mut()[b * mu.cols() + k] += w * diff;
                                ge.values_mut()[i * me.cols() + k] -= w * diff;
                            }
                        }
                    }
                    if needs(*u) {
                        accumulate(&mut grads, *u, gu);
                    }
                    if needs(*e) {
                        accumulate(&mut grads, *e, ge);
                    }
                }
            }
        }

        // Trainable leaves disconnected from the root get explicit zeros.
        for (i, node) in self.nodes.iter().enumerate() {
            match node.op {
                Op::Leaf { trainable: true } => {
                    if grads[i].is_none() {
                        grads[i] = Some(Matrix::zeros(node.value.rows(), node.value.cols()));
                    }
                }
                _ => grads[i] = None,
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn softmax_rows_value(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.set(r, c, e / total);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn add_zero_and_scale_one_are_identities() {
        let mut t = Tape::new();
        let a = t.constant(m(&[vec![1.0, -2.0], vec![3.5, 0.25]]));
        let z = t.constant(Matrix::zeros(2, 2));
        let s = t.add(a, z).unwrap();
        assert_eq!(t.value(s).unwrap(), t.value(a).unwrap());
        let s1 = t.scale(a, 1.0).unwrap();
        assert_eq!(t.value(s1).unwrap(), t.value(a).unwrap());
    }

    #[test]
    fn concat_cols_shape() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 3));
        let b = t.constant(Matrix::zeros(2, 4));
        let c = t.concat_cols(a, b).unwrap();
        assert_eq!(t.value(c).unwrap().shape(), (2, 7));
        let bad = t.constant(Matrix::zeros(3, 4));
        assert!(matches!(t.concat_cols(a, bad), Err(Error::Shape { .. })));
        assert!(matches!(t.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.sub(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let v = t.constant(Matrix::zeros(1, 4));
        let p = t.softmax_rows(v).unwrap();
        assert_eq!(t.value(p).unwrap().values(), &[0.25; 4]);

        let single = t.constant(Matrix::scalar(-37.0));
        let p = t.softmax_rows(single).unwrap();
        assert_eq!(t.value(p).unwrap().values(), &[1.0]);

        let two = t.constant(m(&[vec![2.0, 0.0]]));
        let p = t.softmax_rows(two).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        let got = t.value(p).unwrap().values();
        assert!((got[0] - expected).abs() < 1e-15);
        assert!((got[1] - (1.0 - expected)).abs() < 1e-15);
        assert!((got[0] - 0.880_797_077_977_882_4).abs() < 1e-15);

        let empty = t.constant(Matrix::zeros(1, 0));
        assert!(matches!(t.softmax_rows(empty), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_handles_large_logits() {
        let mut t = Tape::new();
        let v = t.constant(m(&[vec![1000.0, 999.0, -1000.0]]));
        let p = t.softmax_rows(v).unwrap();
        let vals = t.value(p).unwrap().values().to_vec();
        assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(vals[0] > vals[1]);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut t = Tape::new();
        let perfect = t.constant(m(&[vec![0.0, 1.0, 0.0]]));
        let l = t.cross_entropy(perfect, &[1]).unwrap();
        assert!(t.scalar(l).unwrap().abs() < 1e-11);

        let uniform = t.constant(Matrix::filled(1, 4, 0.25));
        for gold in 0..4 {
            let l = t.cross_entropy(uniform, &[gold]).unwrap();
            assert!((t.scalar(l).unwrap() - 4f64.ln()).abs() < 1e-11);
        }

        let p = t.constant(m(&[vec![0.7, 0.3]]));
        let l = t.cross_entropy(p, &[1]).unwrap();
        assert!((t.scalar(l).unwrap() - 1.203_972_804_325_936).abs() < 1e-11);

        assert!(matches!(t.cross_entropy(p, &[2]), Err(Error::Index { .. })));
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut t = Tape::new();
        let a = t.param(m(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
        let s = t.sum(a).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn disconnected_param_gets_zero_and_constants_get_none() {
        let mut t = Tape::new();
        let a = t.param(Matrix::filled(1, 2, 3.0));
        let b = t.param(Matrix::filled(2, 2, 1.0));
        let c = t.constant(Matrix::filled(1, 2, 5.0));
        let prod = t.hadamard(a, c).unwrap();
        let s = t.sum(prod).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap(), &Matrix::zeros(2, 2));
        assert_eq!(g.get(a).unwrap().values(), &[5.0, 5.0]);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn softmax_cross_entropy_gradient_closed_form() {
        let w = m(&[vec![0.3, -1.2, 2.0, 0.5]]);
        let gold = 2;
        let mut t = Tape::new();
        let wv = t.param(w.clone());
        let p = t.softmax_rows(wv).unwrap();
        let l = t.cross_entropy(p, &[gold]).unwrap();
        let probs = t.value(p).unwrap().clone();
        let g = t.backward(l).unwrap();
        let grad = g.get(wv).unwrap();
        for j in 0..4 {
            let onehot = if j == gold { 1.0 } else { 0.0 };
            // ε inside the log perturbs the closed form at the 1e-12 level
            assert!((grad.get(0, j) - (probs.get(0, j) - onehot)).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_twice_is_usage_error() {
        let mut t = Tape::new();
        let a = t.param(Matrix::scalar(2.0));
        let s = t.sum(a).unwrap();
        t.backward(s).unwrap();
        assert!(matches!(t.backward(s), Err(Error::Usage(_))));
    }

    #[test]
    fn foreign_or_nonscalar_root_is_usage_error() {
        let mut other = Tape::new();
        let foreign = other.param(Matrix::scalar(1.0));
        let mut t = Tape::new();
        assert!(matches!(t.backward(foreign), Err(Error::Usage(_))));
        let a = t.param(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(a), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_result_is_rejected() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::scalar(f64::MAX));
        assert!(matches!(t.scale(a, 10.0), Err(Error::NonFinite("scale"))));
    }
}
