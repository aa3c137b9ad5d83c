//! Define-by-run operation tape.
//!
//! Every operation appends a [`Node`] holding its value and enough saved
//! state to replay the chain rule. Node ids are assigned in creation order,
//! so the tape is topologically sorted by construction and [`Tape::backward`]
//! is a single reverse sweep.

use std::cell::RefCell;
use std::fmt;

use crate::error::{invalid, Error, Result};

/// A differentiable operation defined outside the built-in primitive set.
///
/// `inputs` holds the values of the parent tensors in the order they were
/// passed to [`Tape::custom`]; the returned vector must have one entry per
/// input (`None` where `needs_grad[i]` is false).
pub trait CustomOp {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&[f64]], grad_out: &[f64], needs_grad: &[bool]) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    MulRow(usize, usize),
    ScaleBy(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Square(usize),
    ConcatCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    SegmentSum(usize, Vec<usize>),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    Silu(usize),
    LayerNorm {
        x: usize,
        inv_std: Vec<f64>,
    },
    Dropout(usize, Vec<f64>),
    SoftmaxCe {
        logits: usize,
        probs: Vec<f64>,
        targets: Vec<usize>,
        rows: Vec<usize>,
    },
    Custom(Vec<usize>, Box<dyn CustomOp>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulRow(..) => "mul_row",
            Op::ScaleBy(..) => "scale_by",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Exp(..) => "exp",
            Op::Square(..) => "square",
            Op::ConcatCols(..) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::SegmentSum(..) => "segment_sum",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanRows(..) => "mean_rows",
            Op::Silu(..) => "silu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout(..) => "dropout",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
            Op::Custom(_, op) => op.name(),
        }
    }
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.nodes.borrow();
        f.debug_list()
            .entries(nodes.iter().map(|n| (n.op.name(), n.rows, n.cols)))
            .finish()
    }
}

/// Handle to a matrix recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct DTensor<'t> {
    tape: &'t Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

impl fmt::Debug for DTensor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DTensor#{}[{}x{}]", self.id, self.rows, self.cols)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, rows: usize, cols: usize, value: Vec<f64>, op: Op, parents: &[usize]) -> DTensor<'_> {
        debug_assert_eq!(value.len(), rows * cols);
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = parents.iter().any(|&p| nodes[p].needs_grad);
        let id = nodes.len();
        nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        DTensor {
            tape: self,
            id,
            rows,
            cols,
        }
    }

    /// Records an input matrix. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&self, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Result<DTensor<'_>> {
        if value.len() != rows * cols {
            return Err(invalid(format!(
                "leaf of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                value.len()
            )));
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            rows,
            cols,
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Ok(DTensor {
            tape: self,
            id,
            rows,
            cols,
        })
    }

    /// A non-differentiable input.
    pub fn constant(&self, rows: usize, cols: usize, value: Vec<f64>) -> Result<DTensor<'_>> {
        self.leaf(rows, cols, value, false)
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> DTensor<'_> {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf, &[])
    }

    /// Records the output of a [`CustomOp`] whose forward value was computed by the caller.
    pub fn custom<'t>(
        &'t self,
        inputs: &[DTensor<'t>],
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        op: Box<dyn CustomOp>,
    ) -> Result<DTensor<'t>> {
        if value.len() != rows * cols {
            return Err(invalid(format!(
                "{}: output of shape {rows}x{cols} needs {} values, got {}",
                op.name(),
                rows * cols,
                value.len()
            )));
        }
        let ids: Vec<usize> = inputs.iter().map(|t| t.id).collect();
        Ok(self.push(rows, cols, value, Op::Custom(ids.clone(), op), &ids))
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Gradients accumulate across fan-out; only tensors that (transitively)
    /// depend on a `requires_grad` leaf receive one.
    pub fn backward(&self, loss: DTensor<'_>) -> Result<Gradients> {
        if loss.rows != 1 || loss.cols != 1 {
            return Err(Error::NonScalarLoss((loss.rows, loss.cols)));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.needs_grad {
                backprop_node(&nodes, node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], id: usize) -> Option<&'g mut Vec<f64>> {
    let node = &nodes[id];
    if !node.needs_grad {
        return None;
    }
    let len = node.rows * node.cols;
    Some(grads[id].get_or_insert_with(|| vec![0.0; len]))
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let (m, n) = (node.rows, node.cols);
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let k = nodes[*a].cols;
            if let Some(ga) = slot(nodes, grads, *a) {
                // dA = dC · Bᵀ
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        ga[i * k + p] += dot;
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                // dB = Aᵀ · dC
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let a_ip = av[i * k + p];
                        if a_ip == 0.0 {
                            continue;
                        }
                        let dst = &mut gb[p * n..(p + 1) * n];
                        for (d, x) in dst.iter_mut().zip(grow) {
                            *d += a_ip * x;
                        }
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for p in [*a, *b] {
                if let Some(gp) = slot(nodes, grads, p) {
                    gp.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::AddRow(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for row in g.chunks_exact(n) {
                    gb.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * bv[i];
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }
        }
        Op::MulRow(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * bv[i % n];
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for i in 0..g.len() {
                    gb[i % n] += g[i] * av[i];
                }
            }
        }
        Op::ScaleBy(a, s) => {
            let (av, sv) = (&nodes[*a].value, nodes[*s].value[0]);
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(d, x)| *d += x * sv);
            }
            if let Some(gs) = slot(nodes, grads, *s) {
                gs[0] += g.iter().zip(av).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(d, x)| *d += x * c);
            }
        }
        Op::AddScalar(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(d, x)| *d += x);
            }
        }
        Op::Exp(a) => {
            let out = &node.value;
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * out[i];
                }
            }
        }
        Op::Square(a) => {
            let av = &nodes[*a].value;
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += 2.0 * g[i] * av[i];
                }
            }
        }
        Op::ConcatCols(a, b) => {
            let ca = nodes[*a].cols;
            let cb = nodes[*b].cols;
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..m {
                    for j in 0..ca {
                        ga[i * ca + j] += g[i * n + j];
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for i in 0..m {
                    for j in 0..cb {
                        gb[i * cb + j] += g[i * n + ca + j];
                    }
                }
            }
        }
        Op::GatherRows(a, idx) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (j, &src) in idx.iter().enumerate() {
                    let dst = &mut ga[src * n..(src + 1) * n];
                    dst.iter_mut().zip(&g[j * n..(j + 1) * n]).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::SegmentSum(a, seg) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (i, &s) in seg.iter().enumerate() {
                    let dst = &mut ga[i * n..(i + 1) * n];
                    dst.iter_mut().zip(&g[s * n..(s + 1) * n]).for_each(|(d, x)| *d += x);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                let w = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|d| *d += w);
            }
        }
        Op::MeanRows(a) => {
            let rows = nodes[*a].rows;
            if let Some(ga) = slot(nodes, grads, *a) {
                let w = 1.0 / rows as f64;
                for row in ga.chunks_exact_mut(n) {
                    row.iter_mut().zip(g).for_each(|(d, x)| *d += x * w);
                }
            }
        }
        Op::Silu(a) => {
            let av = &nodes[*a].value;
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    let x = av[i];
                    let s = sigmoid(x);
                    ga[i] += g[i] * s * (1.0 + x * (1.0 - s));
                }
            }
        }
        Op::LayerNorm { x, inv_std } => {
            let y = &node.value;
            if let Some(gx) = slot(nodes, grads, *x) {
                let nf = n as f64;
                for i in 0..m {
                    let gr = &g[i * n..(i + 1) * n];
                    let yr = &y[i * n..(i + 1) * n];
                    let mean_g = gr.iter().sum::<f64>() / nf;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for j in 0..n {
                        gx[i * n + j] += inv_std[i] * (gr[j] - mean_g - yr[j] * mean_gy);
                    }
                }
            }
        }
        Op::Dropout(a, mask) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for i in 0..g.len() {
                    ga[i] += g[i] * mask[i];
                }
            }
        }
        Op::SoftmaxCe {
            logits,
            probs,
            targets,
            rows,
        } => {
            let c = nodes[*logits].cols;
            if let Some(gl) = slot(nodes, grads, *logits) {
                let w = g[0] / rows.len() as f64;
                for (&r, p) in rows.iter().zip(probs.chunks_exact(c)) {
                    for j in 0..c {
                        let onehot = if j == targets[r] { 1.0 } else { 0.0 };
                        gl[r * c + j] += w * (p[j] - onehot);
                    }
                }
            }
        }
        Op::Custom(inputs, op) => {
            let values: Vec<&[f64]> = inputs.iter().map(|&i| nodes[i].value.as_slice()).collect();
            let needs: Vec<bool> = inputs.iter().map(|&i| nodes[i].needs_grad).collect();
            let contributions = op.backward(&values, g, &needs);
            for (&i, contrib) in inputs.iter().zip(contributions) {
                if let (Some(c), Some(gi)) = (contrib, slot(nodes, grads, i)) {
                    gi.iter_mut().zip(&c).for_each(|(d, x)| *d += x);
                }
            }
        }
    }
}

/// Result of [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, t: &DTensor<'_>) -> Option<&[f64]> {
        self.grads.get(t.id).and_then(|g| g.as_deref())
    }

    /// Gradient w.r.t. `t`, zero-filled when `t` did not participate.
    pub fn wrt(&self, t: &DTensor<'_>) -> Vec<f64> {
        self.get(t)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; t.rows * t.cols])
    }
}

impl<'t> DTensor<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].needs_grad
    }

    pub fn value(&self) -> Vec<f64> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value[0]
    }

    fn same_shape(&self, other: &DTensor<'t>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> DTensor<'t> {
        let value: Vec<f64> = self.with_value(|v| v.iter().map(|&x| f(x)).collect());
        self.tape.push(self.rows, self.cols, value, op, &[self.id])
    }

    pub fn matmul(&self, other: &DTensor<'t>) -> Result<DTensor<'t>> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a_ip = a[i * k + p];
                    if a_ip == 0.0 {
                        continue;
                    }
                    let brow = &b[p * n..(p + 1) * n];
                    for (o, x) in orow.iter_mut().zip(brow) {
                        *o += a_ip * x;
                    }
                }
            }
            out
        };
        Ok(self
            .tape
            .push(m, n, value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    fn zip_with(&self, other: &DTensor<'t>, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let nodes = self.tape.nodes.borrow();
        nodes[self.id]
            .value
            .iter()
            .zip(&nodes[other.id].value)
            .map(|(&a, &b)| f(a, b))
            .collect()
    }

    pub fn add(&self, other: &DTensor<'t>) -> Result<DTensor<'t>> {
        self.same_shape(other, "add")?;
        let value = self.zip_with(other, |a, b| a + b);
        Ok(self.tape.push(
            self.rows,
            self.cols,
            value,
            Op::Add(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    pub fn sub(&self, other: &DTensor<'t>) -> Result<DTensor<'t>> {
        self.add(&other.scale(-1.0))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &DTensor<'t>) -> Result<DTensor<'t>> {
        self.same_shape(other, "mul")?;
        let value = self.zip_with(other, |a, b| a * b);
        Ok(self.tape.push(
            self.rows,
            self.cols,
            value,
            Op::Mul(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    fn row_broadcast(&self, row: &DTensor<'t>, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: row.shape(),
            });
        }
        let nodes = self.tape.nodes.borrow();
        let r = &nodes[row.id].value;
        Ok(nodes[self.id]
            .value
            .iter()
            .enumerate()
            .map(|(i, &a)| f(a, r[i % self.cols]))
            .collect())
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &DTensor<'t>) -> Result<DTensor<'t>> {
        let value = self.row_broadcast(row, "add_row", |a, b| a + b)?;
        Ok(self.tape.push(
            self.rows,
            self.cols,
            value,
            Op::AddRow(self.id, row.id),
            &[self.id, row.id],
        ))
    }

    /// Multiplies every row elementwise by a `1 x cols` row.
    pub fn mul_row(&self, row: &DTensor<'t>) -> Result<DTensor<'t>> {
        let value = self.row_broadcast(row, "mul_row", |a, b| a * b)?;
        Ok(self.tape.push(
            self.rows,
            self.cols,
            value,
            Op::MulRow(self.id, row.id),
            &[self.id, row.id],
        ))
    }

    /// Multiplies by a differentiable 1x1 scalar.
    pub fn scale_by(&self, s: &DTensor<'t>) -> Result<DTensor<'t>> {
        if s.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "scale_by",
                left: self.shape(),
                right: s.shape(),
            });
        }
        let sv = s.item();
        let value = self.with_value(|v| v.iter().map(|x| x * sv).collect());
        Ok(self.tape.push(
            self.rows,
            self.cols,
            value,
            Op::ScaleBy(self.id, s.id),
            &[self.id, s.id],
        ))
    }

    pub fn scale(&self, c: f64) -> DTensor<'t> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn add_scalar(&self, c: f64) -> DTensor<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn exp(&self) -> DTensor<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn square(&self) -> DTensor<'t> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// `x · σ(x)`.
    pub fn silu(&self) -> DTensor<'t> {
        self.unary(Op::Silu(self.id), |x| x * sigmoid(x))
    }

    pub fn concat_cols(&self, other: &DTensor<'t>) -> Result<DTensor<'t>> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "concat_cols",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (ca, cb) = (self.cols, other.cols);
        let n = ca + cb;
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id].value, &nodes[other.id].value);
            let mut out = Vec::with_capacity(self.rows * n);
            for i in 0..self.rows {
                out.extend_from_slice(&a[i * ca..(i + 1) * ca]);
                out.extend_from_slice(&b[i * cb..(i + 1) * cb]);
            }
            out
        };
        Ok(self.tape.push(
            self.rows,
            n,
            value,
            Op::ConcatCols(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    /// Row `j` of the output is row `index[j]` of `self`.
    pub fn gather_rows(&self, index: &[usize]) -> Result<DTensor<'t>> {
        if let Some(&bad) = index.iter().find(|&&i| i >= self.rows) {
            return Err(invalid(format!(
                "gather_rows: index {bad} out of range for {} rows",
                self.rows
            )));
        }
        let n = self.cols;
        let value = self.with_value(|v| {
            let mut out = Vec::with_capacity(index.len() * n);
            for &i in index {
                out.extend_from_slice(&v[i * n..(i + 1) * n]);
            }
            out
        });
        Ok(self.tape.push(
            index.len(),
            n,
            value,
            Op::GatherRows(self.id, index.to_vec()),
            &[self.id],
        ))
    }

    /// Sums row `i` into output row `segment[i]`; the output has `num_segments` rows.
    pub fn segment_sum(&self, segment: &[usize], num_segments: usize) -> Result<DTensor<'t>> {
        if segment.len() != self.rows {
            return Err(invalid(format!(
                "segment_sum: {} segment ids for {} rows",
                segment.len(),
                self.rows
            )));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= num_segments) {
            return Err(invalid(format!("segment_sum: segment {bad} >= {num_segments}")));
        }
        let n = self.cols;
        let value = self.with_value(|v| {
            let mut out = vec![0.0; num_segments * n];
            for (i, &s) in segment.iter().enumerate() {
                let dst = &mut out[s * n..(s + 1) * n];
                dst.iter_mut().zip(&v[i * n..(i + 1) * n]).for_each(|(d, x)| *d += x);
            }
            out
        });
        Ok(self.tape.push(
            num_segments,
            n,
            value,
            Op::SegmentSum(self.id, segment.to_vec()),
            &[self.id],
        ))
    }

    pub fn sum(&self) -> DTensor<'t> {
        let s = self.with_value(|v| v.iter().sum());
        self.tape.push(1, 1, vec![s], Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> DTensor<'t> {
        let s = self.with_value(|v| v.iter().sum::<f64>() / v.len() as f64);
        self.tape.push(1, 1, vec![s], Op::Mean(self.id), &[self.id])
    }

    /// Column-wise mean over rows, giving a `1 x cols` tensor.
    pub fn mean_rows(&self) -> DTensor<'t> {
        let n = self.cols;
        let value = self.with_value(|v| {
            let mut out = vec![0.0; n];
            for row in v.chunks_exact(n) {
                out.iter_mut().zip(row).for_each(|(d, x)| *d += x);
            }
            out.iter_mut().for_each(|d| *d /= self.rows as f64);
            out
        });
        self.tape.push(1, n, value, Op::MeanRows(self.id), &[self.id])
    }

    /// Per-row standardisation with population variance.
    pub fn layer_norm(&self, eps: f64) -> Result<DTensor<'t>> {
        if self.cols == 0 || eps <= 0.0 {
            return Err(invalid(format!("layer_norm: cols={} eps={eps}", self.cols)));
        }
        let n = self.cols;
        let nf = n as f64;
        let (value, inv_std) = self.with_value(|v| {
            let mut out = Vec::with_capacity(v.len());
            let mut inv_std = Vec::with_capacity(self.rows);
            for row in v.chunks_exact(n) {
                let mean = row.iter().sum::<f64>() / nf;
                let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
                let inv = 1.0 / (var + eps).sqrt();
                out.extend(row.iter().map(|x| (x - mean) * inv));
                inv_std.push(inv);
            }
            (out, inv_std)
        });
        Ok(self
            .tape
            .push(self.rows, n, value, Op::LayerNorm { x: self.id, inv_std }, &[self.id]))
    }

    /// Multiplies by a fixed (already scaled) keep-mask.
    pub fn dropout_mask(&self, mask: Vec<f64>) -> Result<DTensor<'t>> {
        if mask.len() != self.len() {
            return Err(invalid(format!(
                "dropout mask has {} entries for a {}x{} tensor",
                mask.len(),
                self.rows,
                self.cols
            )));
        }
        let value = self.with_value(|v| v.iter().zip(&mask).map(|(x, k)| x * k).collect());
        Ok(self
            .tape
            .push(self.rows, self.cols, value, Op::Dropout(self.id, mask), &[self.id]))
    }

    /// Mean over rows with `mask[i]` of `-log softmax(row)[targets[i]]`.
    pub fn softmax_cross_entropy(&self, targets: &[usize], mask: &[bool]) -> Result<DTensor<'t>> {
        let (m, c) = self.shape();
        if targets.len() != m || mask.len() != m {
            return Err(invalid(format!(
                "softmax_cross_entropy: {m} rows but {} targets and {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        let rows: Vec<usize> = (0..m).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(invalid("softmax_cross_entropy: mask selects no rows"));
        }
        if let Some(&r) = rows.iter().find(|&&r| targets[r] >= c) {
            return Err(invalid(format!(
                "softmax_cross_entropy: target {} out of range for {c} classes",
                targets[r]
            )));
        }
        let (loss, probs) = self.with_value(|v| {
            let mut probs = Vec::with_capacity(rows.len() * c);
            let mut total = 0.0;
            for &r in &rows {
                let row = &v[r * c..(r + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
                let log_z = z.ln() + max;
                total += log_z - row[targets[r]];
                probs.extend(row.iter().map(|x| (x - log_z).exp()));
            }
            (total / rows.len() as f64, probs)
        });
        Ok(self.tape.push(
            1,
            1,
            vec![loss],
            Op::SoftmaxCe {
                logits: self.id,
                probs,
                targets: targets.to_vec(),
                rows,
            },
            &[self.id],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matmul_hand_values() {
        let tape = Tape::new();
        let a = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = tape.constant(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().value(), vec![19.0, 22.0, 43.0, 50.0]);

        let eye = tape.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(eye.matmul(&b).unwrap().value(), b.value());
        let zero = tape.zeros(2, 2);
        assert_eq!(zero.matmul(&b).unwrap().value(), vec![0.0; 4]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.zeros(2, 3);
        let b = tape.zeros(2, 3);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn silu_values() {
        let tape = Tape::new();
        let x = tape.constant(1, 3, vec![0.0, 50.0, 1.0]).unwrap();
        let y = x.silu().value();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 50.0).abs() < 1e-9);
        // 1 / (1 + e^-1)
        assert_abs_diff_eq!(y[2], 0.731_058_578_630_004_9, epsilon = 1e-15);
    }

    #[test]
    fn layer_norm_rows() {
        let tape = Tape::new();
        let x = tape
            .constant(3, 3, vec![1.0, 3.0, 2.0, 4.0, 4.0, 4.0, 0.0, 1.0, 5.0])
            .unwrap();
        let y = x.layer_norm(1e-5).unwrap().value();
        let s = (2.0f64 / 3.0 + 1e-5).sqrt();
        assert_abs_diff_eq!(y[0], -1.0 / s, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 1.0 / s, epsilon = 1e-12);
        assert_eq!(&y[3..6], &[0.0, 0.0, 0.0]);
        let s = (14.0f64 / 3.0 + 1e-5).sqrt();
        for (j, x) in [0.0, 1.0, 5.0].iter().enumerate() {
            assert_abs_diff_eq!(y[6 + j], (x - 2.0) / s, epsilon = 1e-12);
        }
    }

    #[test]
    fn layer_norm_two_column_row_is_plus_minus_one() {
        let tape = Tape::new();
        let x = tape.constant(1, 2, vec![1.0, 3.0]).unwrap();
        let y = x.layer_norm(1e-5).unwrap().value();
        assert_abs_diff_eq!(y[0], -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn cross_entropy_values() {
        let tape = Tape::new();
        let uniform = tape.zeros(4, 7);
        let l = uniform.softmax_cross_entropy(&[0, 1, 2, 3], &[true; 4]).unwrap();
        assert_abs_diff_eq!(l.item(), 7f64.ln(), epsilon = 1e-12);

        let confident = tape.constant(1, 3, vec![0.0, 1e4, 0.0]).unwrap();
        let l = confident.softmax_cross_entropy(&[1], &[true]).unwrap();
        assert!(l.item() < 1e-6);

        let two = tape.constant(1, 2, vec![1.0, 2.0]).unwrap();
        let l = two.softmax_cross_entropy(&[0], &[true]).unwrap();
        // -ln(e / (e + e^2))
        assert_abs_diff_eq!(l.item(), 1.313_261_687_518_222_8, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_empty_mask_is_an_error() {
        let tape = Tape::new();
        let x = tape.zeros(2, 2);
        assert!(x.softmax_cross_entropy(&[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn backward_square_and_unused_param() {
        let tape = Tape::new();
        let x = tape.leaf(1, 1, vec![3.0], true).unwrap();
        let p = tape.leaf(1, 1, vec![7.0], true).unwrap();
        let loss = x.mul(&x).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&x), vec![6.0]);
        assert_eq!(grads.wrt(&p), vec![0.0]);
        assert_eq!(grads.wrt(&loss), vec![1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.leaf(1, 2, vec![1.0, 2.0], true).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss((1, 2)))));
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(1, 2, vec![1.0, -2.0], true).unwrap();
        // L = sum(x) + sum(3x) → dL/dx = 4
        let loss = x.add(&x.scale(3.0)).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&x), vec![4.0, 4.0]);
    }

    #[test]
    fn gather_and_segment_sum_are_adjoint() {
        let tape = Tape::new();
        let x = tape.leaf(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], true).unwrap();
        let g = x.gather_rows(&[2, 0, 2]).unwrap();
        assert_eq!(g.value(), vec![5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = g.segment_sum(&[0, 1, 0], 2).unwrap();
        assert_eq!(s.value(), vec![10.0, 12.0, 1.0, 2.0]);
        let grads = tape.backward(s.sum()).unwrap();
        assert_eq!(grads.wrt(&x), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }
}
