use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::linalg;
use super::tensor::{matmul_raw, transpose_raw, NodeId, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Input of a recorded op: the forward value, plus the parent node when tracked.
#[derive(Clone)]
struct Operand {
    node: Option<usize>,
    rows: usize,
    cols: usize,
    value: Arc<Vec<f64>>,
}

enum Op {
    Leaf,
    MatMul(Operand, Operand),
    Add(Operand, Operand),
    Sub(Operand, Operand),
    Mul(Operand, Operand),
    AddRow(Operand, Operand),
    MulScalar(Operand, Operand),
    Scale(Operand, f64),
    Offset(Operand),
    Pow(Operand, f64),
    Exp(Operand),
    Ln(Operand),
    Abs(Operand),
    Relu(Operand),
    Sigmoid(Operand),
    SoftmaxRows(Operand),
    Transpose(Operand),
    Reshape(Operand),
    SumAll(Operand),
    RowSums(Operand),
    ColMeans(Operand),
    Gather(Operand, Vec<Option<usize>>),
    HCat(Vec<Operand>),
    VCat(Vec<Operand>),
    /// The node value is the inverse itself.
    Inverse(Operand),
    /// Saved inverse of the input.
    LogDet(Operand, Vec<f64>),
    Surrogate(Operand),
}

struct Node {
    cols: usize,
    value: Arc<Vec<f64>>,
    op: Op,
}

/// Records differentiable operations in topological order.
///
/// Every op whose inputs are all constants returns a constant and records nothing,
/// so a tape only holds the part of the graph that reaches a watched tensor.
/// A tape is a single-threaded unit of work; distinct tapes are independent.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a fresh leaf holding the values of `t`.
    pub fn watch(&self, t: &Tensor) -> Tensor {
        self.push(t.rows(), t.cols(), t.shared(), Op::Leaf)
    }

    fn push(&self, rows: usize, cols: usize, value: Arc<Vec<f64>>, op: Op) -> Tensor {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        nodes.push(Node {
            cols,
            value: Arc::clone(&value),
            op,
        });
        Tensor::from_shared(rows, cols, value).with_node(NodeId {
            tape: self.id,
            index,
        })
    }

    fn operand(&self, t: &Tensor) -> Operand {
        let node = t.node().map(|id| {
            assert_eq!(id.tape, self.id, "tensor belongs to a different tape");
            id.index
        });
        Operand {
            node,
            rows: t.rows(),
            cols: t.cols(),
            value: t.shared(),
        }
    }

    fn emit(
        &self,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        inputs: &[&Tensor],
        op: impl FnOnce() -> Op,
    ) -> Tensor {
        if inputs.iter().any(|t| t.is_tracked()) {
            self.push(rows, cols, Arc::new(value), op())
        } else {
            Tensor::from_parts(rows, cols, value)
        }
    }

    fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(Error::Dimension {
                op,
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.cols() != b.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let v = matmul_raw(a.data(), b.data(), m, k, n);
        Ok(self.emit(m, n, v, &[a, b], || {
            Op::MatMul(self.operand(a), self.operand(b))
        }))
    }

    fn zip(&self, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.emit(a.rows(), a.cols(), v, &[a, b], || {
            Op::Add(self.operand(a), self.operand(b))
        }))
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.emit(a.rows(), a.cols(), v, &[a, b], || {
            Op::Sub(self.operand(a), self.operand(b))
        }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        Self::same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.emit(a.rows(), a.cols(), v, &[a, b], || {
            Op::Mul(self.operand(a), self.operand(b))
        }))
    }

    /// Adds the `1 x n` row `bias` to every row of `a`.
    pub fn add_row(&self, a: &Tensor, bias: &Tensor) -> Result<Tensor> {
        if bias.rows() != 1 || bias.cols() != a.cols() {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: a.shape(),
                rhs: bias.shape(),
            });
        }
        let n = a.cols();
        let b = bias.data();
        let v = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b[i % n])
            .collect();
        Ok(self.emit(a.rows(), n, v, &[a, bias], || {
            Op::AddRow(self.operand(a), self.operand(bias))
        }))
    }

    /// Multiplies every entry of `a` by the `1 x 1` tensor `s`.
    pub fn mul_scalar(&self, a: &Tensor, s: &Tensor) -> Result<Tensor> {
        if s.shape() != [1, 1] {
            return Err(Error::Dimension {
                op: "mul_scalar",
                lhs: a.shape(),
                rhs: s.shape(),
            });
        }
        let c = s.item();
        let v = a.data().iter().map(|&x| x * c).collect();
        Ok(self.emit(a.rows(), a.cols(), v, &[a, s], || {
            Op::MulScalar(self.operand(a), self.operand(s))
        }))
    }

    fn unary(&self, a: &Tensor, f: impl Fn(f64) -> f64, op: impl FnOnce(Operand) -> Op) -> Tensor {
        let v = a.data().iter().map(|&x| f(x)).collect();
        self.emit(a.rows(), a.cols(), v, &[a], || op(self.operand(a)))
    }

    pub fn scale(&self, a: &Tensor, c: f64) -> Tensor {
        self.unary(a, |x| x * c, |o| Op::Scale(o, c))
    }

    pub fn neg(&self, a: &Tensor) -> Tensor {
        self.scale(a, -1.0)
    }

    pub fn offset(&self, a: &Tensor, c: f64) -> Tensor {
        self.unary(a, |x| x + c, Op::Offset)
    }

    pub fn pow(&self, a: &Tensor, p: f64) -> Tensor {
        self.unary(a, |x| x.powf(p), |o| Op::Pow(o, p))
    }

    pub fn exp(&self, a: &Tensor) -> Tensor {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn ln(&self, a: &Tensor) -> Tensor {
        self.unary(a, f64::ln, Op::Ln)
    }

    pub fn abs(&self, a: &Tensor) -> Tensor {
        self.unary(a, f64::abs, Op::Abs)
    }

    pub fn relu(&self, a: &Tensor) -> Tensor {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu)
    }

    pub fn sigmoid(&self, a: &Tensor) -> Tensor {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn softmax_rows(&self, a: &Tensor) -> Tensor {
        let n = a.cols();
        let mut v = Vec::with_capacity(a.len());
        for row in a.data().chunks(n.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            v.extend(e.iter().map(|x| x / s));
        }
        self.emit(a.rows(), n, v, &[a], || Op::SoftmaxRows(self.operand(a)))
    }

    pub fn transpose(&self, a: &Tensor) -> Tensor {
        let v = transpose_raw(a.data(), a.rows(), a.cols());
        self.emit(a.cols(), a.rows(), v, &[a], || Op::Transpose(self.operand(a)))
    }

    /// Reinterprets the row-major data under a new shape.
    pub fn reshape(&self, a: &Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        if rows * cols != a.len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: a.shape(),
                rhs: [rows, cols],
            });
        }
        Ok(self.emit(rows, cols, a.to_vec(), &[a], || {
            Op::Reshape(self.operand(a))
        }))
    }

    pub fn sum_all(&self, a: &Tensor) -> Tensor {
        self.emit(1, 1, vec![a.sum()], &[a], || Op::SumAll(self.operand(a)))
    }

    /// Sum of each row, as an `m x 1` column.
    pub fn row_sums(&self, a: &Tensor) -> Tensor {
        let n = a.cols();
        let v = a.data().chunks(n.max(1)).map(|r| r.iter().sum()).collect();
        self.emit(a.rows(), 1, v, &[a], || Op::RowSums(self.operand(a)))
    }

    /// Mean over rows, as a `1 x n` row.
    pub fn col_means(&self, a: &Tensor) -> Tensor {
        let (m, n) = (a.rows(), a.cols());
        let mut v = vec![0.0; n];
        for row in a.data().chunks(n.max(1)) {
            for (acc, &x) in v.iter_mut().zip(row) {
                *acc += x;
            }
        }
        for x in &mut v {
            *x /= m as f64;
        }
        self.emit(1, n, v, &[a], || Op::ColMeans(self.operand(a)))
    }

    /// Builds a `rows x cols` tensor whose k-th entry is `a.data()[index[k]]`, or 0 for `None`.
    pub fn gather(
        &self,
        a: &Tensor,
        rows: usize,
        cols: usize,
        index: Vec<Option<usize>>,
    ) -> Result<Tensor> {
        if index.len() != rows * cols {
            return Err(Error::Dimension {
                op: "gather",
                lhs: [rows, cols],
                rhs: [index.len(), 1],
            });
        }
        if let Some(bad) = index.iter().flatten().find(|&&i| i >= a.len()) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {:?}",
                a.shape()
            )));
        }
        let src = a.data();
        let v = index.iter().map(|i| i.map_or(0.0, |i| src[i])).collect();
        Ok(self.emit(rows, cols, v, &[a], || {
            Op::Gather(self.operand(a), index)
        }))
    }

    pub fn hcat(&self, parts: &[&Tensor]) -> Result<Tensor> {
        let rows = parts.first().map_or(0, |t| t.rows());
        if let Some(bad) = parts.iter().find(|t| t.rows() != rows) {
            return Err(Error::Dimension {
                op: "hcat",
                lhs: parts[0].shape(),
                rhs: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(|t| t.cols()).sum();
        let mut v = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for t in parts {
                v.extend_from_slice(&t.data()[i * t.cols()..(i + 1) * t.cols()]);
            }
        }
        Ok(self.emit(rows, cols, v, parts, || {
            Op::HCat(parts.iter().map(|t| self.operand(t)).collect())
        }))
    }

    pub fn vcat(&self, parts: &[&Tensor]) -> Result<Tensor> {
        let cols = parts.first().map_or(0, |t| t.cols());
        if let Some(bad) = parts.iter().find(|t| t.cols() != cols) {
            return Err(Error::Dimension {
                op: "vcat",
                lhs: parts[0].shape(),
                rhs: bad.shape(),
            });
        }
        let rows: usize = parts.iter().map(|t| t.rows()).sum();
        let mut v = Vec::with_capacity(rows * cols);
        for t in parts {
            v.extend_from_slice(t.data());
        }
        Ok(self.emit(rows, cols, v, parts, || {
            Op::VCat(parts.iter().map(|t| self.operand(t)).collect())
        }))
    }

    /// Matrix inverse; fails with [`Error::Singular`] when the 1-norm condition
    /// estimate exceeds [`linalg::CONDITION_LIMIT`].
    pub fn inverse(&self, a: &Tensor) -> Result<Tensor> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension {
                op: "inverse",
                lhs: a.shape(),
                rhs: a.shape(),
            });
        }
        let (inv, _) = linalg::invert(a.data(), n)?;
        Ok(self.emit(n, n, inv, &[a], || Op::Inverse(self.operand(a))))
    }

    /// Natural log-determinant of a symmetric positive definite matrix.
    pub fn logdet_spd(&self, a: &Tensor) -> Result<Tensor> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension {
                op: "logdet",
                lhs: a.shape(),
                rhs: a.shape(),
            });
        }
        let ld = linalg::logdet_spd(a.data(), n)?;
        if !a.is_tracked() {
            return Ok(Tensor::scalar(ld));
        }
        let (inv, _) = linalg::invert(a.data(), n)?;
        Ok(self.emit(1, 1, vec![ld], &[a], || Op::LogDet(self.operand(a), inv)))
    }

    /// Forward value `value`, backward pass-through to `source` with unit Jacobian
    /// (straight-through estimator).
    pub fn surrogate(&self, value: &Tensor, source: &Tensor) -> Result<Tensor> {
        Self::same_shape("surrogate", value, source)?;
        Ok(self.emit(value.rows(), value.cols(), value.to_vec(), &[source], || {
            Op::Surrogate(self.operand(source))
        }))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.shape() != [1, 1] {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        self.backward_with(loss, &Tensor::scalar(1.0))
    }

    /// Reverse pass seeded with an explicit upstream gradient for `output`.
    pub fn backward_with(&self, output: &Tensor, seed: &Tensor) -> Result<Gradients> {
        Self::same_shape("backward", output, seed)?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        let Some(root) = output.node() else {
            return Ok(Gradients {
                tape: self.id,
                grads,
            });
        };
        assert_eq!(root.tape, self.id, "output belongs to a different tape");
        grads[root.index] = Some(seed.to_vec());

        for idx in (0..=root.index).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
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

fn accumulate(grads: &mut [Option<Vec<f64>>], op: &Operand, f: impl FnOnce(&mut [f64])) {
    if let Some(i) = op.node {
        let slot = grads[i].get_or_insert_with(|| vec![0.0; op.rows * op.cols]);
        f(slot);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn propagate(node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k, n) = (a.rows, a.cols, b.cols);
            if a.node.is_some() {
                let bt = transpose_raw(&b.value, k, n);
                let ga = matmul_raw(g, &bt, m, n, k);
                accumulate(grads, a, |d| add_into(d, &ga));
            }
            if b.node.is_some() {
                let at = transpose_raw(&a.value, m, k);
                let gb = matmul_raw(&at, g, k, m, n);
                accumulate(grads, b, |d| add_into(d, &gb));
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, a, |d| add_into(d, g));
            accumulate(grads, b, |d| add_into(d, g));
        }
        Op::Sub(a, b) => {
            accumulate(grads, a, |d| add_into(d, g));
            accumulate(grads, b, |d| {
                for (d, s) in d.iter_mut().zip(g) {
                    *d -= s;
                }
            });
        }
        Op::Mul(a, b) => {
            accumulate(grads, a, |d| {
                for ((d, gi), bi) in d.iter_mut().zip(g).zip(b.value.iter()) {
                    *d += gi * bi;
                }
            });
            accumulate(grads, b, |d| {
                for ((d, gi), ai) in d.iter_mut().zip(g).zip(a.value.iter()) {
                    *d += gi * ai;
                }
            });
        }
        Op::AddRow(a, b) => {
            accumulate(grads, a, |d| add_into(d, g));
            let n = b.cols;
            accumulate(grads, b, |d| {
                for (i, gi) in g.iter().enumerate() {
                    d[i % n] += gi;
                }
            });
        }
        Op::MulScalar(a, s) => {
            let c = s.value[0];
            accumulate(grads, a, |d| {
                for (d, gi) in d.iter_mut().zip(g) {
                    *d += gi * c;
                }
            });
            accumulate(grads, s, |d| {
                d[0] += g.iter().zip(a.value.iter()).map(|(gi, ai)| gi * ai).sum::<f64>();
            });
        }
        Op::Scale(a, c) => accumulate(grads, a, |d| {
            for (d, gi) in d.iter_mut().zip(g) {
                *d += gi * c;
            }
        }),
        Op::Offset(a) | Op::Reshape(a) | Op::Surrogate(a) => {
            accumulate(grads, a, |d| add_into(d, g))
        }
        Op::Pow(a, p) => accumulate(grads, a, |d| {
            for ((d, gi), x) in d.iter_mut().zip(g).zip(a.value.iter()) {
                *d += gi * p * x.powf(p - 1.0);
            }
        }),
        Op::Exp(a) => accumulate(grads, a, |d| {
            for ((d, gi), yi) in d.iter_mut().zip(g).zip(y.iter()) {
                *d += gi * yi;
            }
        }),
        Op::Ln(a) => accumulate(grads, a, |d| {
            for ((d, gi), x) in d.iter_mut().zip(g).zip(a.value.iter()) {
                *d += gi / x;
            }
        }),
        Op::Abs(a) => accumulate(grads, a, |d| {
            for ((d, gi), x) in d.iter_mut().zip(g).zip(a.value.iter()) {
                if *x > 0.0 {
                    *d += gi;
                } else if *x < 0.0 {
                    *d -= gi;
                }
            }
        }),
        Op::Relu(a) => accumulate(grads, a, |d| {
            for ((d, gi), x) in d.iter_mut().zip(g).zip(a.value.iter()) {
                if *x > 0.0 {
                    *d += gi;
                }
            }
        }),
        Op::Sigmoid(a) => accumulate(grads, a, |d| {
            for ((d, gi), yi) in d.iter_mut().zip(g).zip(y.iter()) {
                *d += gi * yi * (1.0 - yi);
            }
        }),
        Op::SoftmaxRows(a) => {
            let n = a.cols.max(1);
            accumulate(grads, a, |d| {
                for ((drow, grow), yrow) in d.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(gi, yi)| gi * yi).sum();
                    for ((d, gi), yi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += yi * (gi - dot);
                    }
                }
            })
        }
        Op::Transpose(a) => {
            let gt = transpose_raw(g, a.cols, a.rows);
            accumulate(grads, a, |d| add_into(d, &gt));
        }
        Op::SumAll(a) => accumulate(grads, a, |d| {
            for d in d.iter_mut() {
                *d += g[0];
            }
        }),
        Op::RowSums(a) => {
            let n = a.cols.max(1);
            accumulate(grads, a, |d| {
                for (drow, gi) in d.chunks_mut(n).zip(g) {
                    for d in drow {
                        *d += gi;
                    }
                }
            })
        }
        Op::ColMeans(a) => {
            let (m, n) = (a.rows as f64, a.cols.max(1));
            accumulate(grads, a, |d| {
                for drow in d.chunks_mut(n) {
                    for (d, gi) in drow.iter_mut().zip(g) {
                        *d += gi / m;
                    }
                }
            })
        }
        Op::Gather(a, index) => accumulate(grads, a, |d| {
            for (gi, i) in g.iter().zip(index) {
                if let Some(i) = i {
                    d[*i] += gi;
                }
            }
        }),
        Op::HCat(parts) => {
            let total = node.cols;
            let mut offset = 0;
            for p in parts {
                accumulate(grads, p, |d| {
                    for i in 0..p.rows {
                        let src = &g[i * total + offset..i * total + offset + p.cols];
                        add_into(&mut d[i * p.cols..(i + 1) * p.cols], src);
                    }
                });
                offset += p.cols;
            }
        }
        Op::VCat(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = p.rows * p.cols;
                accumulate(grads, p, |d| add_into(d, &g[offset..offset + len]));
                offset += len;
            }
        }
        Op::Inverse(a) => {
            // dA = -A^{-T} G A^{-T}
            let n = a.rows;
            let yt = transpose_raw(y, n, n);
            let t = matmul_raw(&yt, g, n, n, n);
            let ga = matmul_raw(&t, &yt, n, n, n);
            accumulate(grads, a, |d| {
                for (d, v) in d.iter_mut().zip(&ga) {
                    *d -= v;
                }
            });
        }
        Op::LogDet(a, inv) => {
            let n = a.rows;
            accumulate(grads, a, |d| {
                for i in 0..n {
                    for j in 0..n {
                        d[i * n + j] += g[0] * inv[j * n + i];
                    }
                }
            });
        }
    }
}

/// Gradients produced by one reverse pass, indexed by node.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a tracked tensor, `None` when it does not reach the output.
    pub fn get(&self, t: &Tensor) -> Option<Tensor> {
        let id = t.node()?;
        if id.tape != self.tape {
            return None;
        }
        self.grads
            .get(id.index)?
            .as_ref()
            .map(|g| Tensor::from_parts(t.rows(), t.cols(), g.clone()))
    }

    /// Like [`get`](Self::get) but yields zeros for unreached tensors.
    pub fn wrt(&self, t: &Tensor) -> Tensor {
        self.get(t)
            .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
    }
}
