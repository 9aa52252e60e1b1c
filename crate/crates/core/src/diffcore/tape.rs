//! Tape-based reverse-mode differentiation.
//!
//! Every op executed through a [`Var`] appends a node to its [`Tape`]. Node
//! ids are assigned in execution order, so replaying the node list from the
//! back visits each node after all of its consumers.

use std::cell::RefCell;

use super::tensor::{gemm, Tensor};
use super::DiffError;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    ScaleRows(usize, usize),
    ScaleCols(usize, usize),
    Affine(usize, f64),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    ClampMin(usize, f64),
    Powf(usize, f64),
    Transpose(usize),
    SliceCols(usize, usize),
    SumRows(usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
    Diag(usize),
    LogSumExpRows(usize),
    NormalizeRows {
        x: usize,
        denom: Vec<f64>,
        clamped: Vec<bool>,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::ScaleRows(..) => "scale_rows",
            Op::ScaleCols(..) => "scale_cols",
            Op::Affine(..) => "affine",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::ClampMin(..) => "clamp_min",
            Op::Powf(..) => "powf",
            Op::Transpose(..) => "transpose",
            Op::SliceCols(..) => "slice_cols",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Diag(..) => "diag",
            Op::LogSumExpRows(..) => "logsumexp_rows",
            Op::NormalizeRows { .. } => "normalize_rows",
            Op::BatchNorm { .. } => "batch_norm",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    consumed: bool,
    fault: Option<&'static str>,
}

/// Records one forward/backward cycle. Call [`Tape::reset`] before reuse.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, var: &Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

/// Batch statistics observed by a train-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Running statistics used by eval-mode batch norm.
#[derive(Debug, Clone, Copy)]
pub enum NormMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded node so the tape can drive a new cycle.
    pub fn reset(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.clear();
        inner.consumed = false;
        inner.fault = None;
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the first op that produced a non-finite value, if any.
    pub fn fault(&self) -> Option<&'static str> {
        self.inner.borrow().fault
    }

    /// Trainable input.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        if inner.fault.is_none() && !value.is_finite() {
            inner.fault = Some(op.name());
        }
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self, id }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let inner = self.inner.borrow();
        ids.iter().any(|&i| inner.nodes[i].requires_grad)
    }

    /// Replays the tape from `loss` and returns gradients for every node that
    /// requires one. The tape must be reset before it can be replayed again.
    pub fn backward(&self, loss: &Var<'_>) -> Result<Gradients, DiffError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(DiffError::Detached);
        }
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(DiffError::AlreadyBackpropagated);
        }
        if let Some(op) = inner.fault {
            return Err(DiffError::NonFinite { op, stage: "forward" });
        }
        let loss_node = &inner.nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(DiffError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        if !loss_node.requires_grad {
            return Err(DiffError::Detached);
        }
        inner.consumed = true;
        let nodes = &inner.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite {
                    op: node.op.name(),
                    stage: "backward",
                });
            }
            propagate(nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|g| {
                    Tensor::new(nodes[id].value.shape().to_vec(), g)
                        .expect("gradient shape mirrors value shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.inner.borrow(), |i| &i.nodes[id].value)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.numel()]);
    f(slot);
}

fn propagate(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = nodes[*a].value.dims2().unwrap();
            let (_, n) = nodes[*b].value.dims2().unwrap();
            let bv = nodes[*b].value.data();
            let av = nodes[*a].value.data();
            accumulate(grads, nodes, *a, |da| gemm(m, n, k, g, false, bv, true, da, 1.0));
            accumulate(grads, nodes, *b, |db| gemm(k, m, n, av, true, g, false, db, 1.0));
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, |da| add_into(da, g));
            accumulate(grads, nodes, *b, |db| add_into(db, g));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, |da| add_into(da, g));
            accumulate(grads, nodes, *b, |db| {
                for (d, &v) in db.iter_mut().zip(g) {
                    *d -= v;
                }
            });
        }
        Op::Mul(a, b) => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            accumulate(grads, nodes, *a, |da| {
                for i in 0..g.len() {
                    da[i] += g[i] * bv[i];
                }
            });
            accumulate(grads, nodes, *b, |db| {
                for i in 0..g.len() {
                    db[i] += g[i] * av[i];
                }
            });
        }
        Op::AddRow(x, bias) => {
            let cols = nodes[*bias].value.numel();
            accumulate(grads, nodes, *x, |dx| add_into(dx, g));
            accumulate(grads, nodes, *bias, |db| {
                for row in g.chunks(cols) {
                    add_into(db, row);
                }
            });
        }
        Op::ScaleRows(x, v) => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            let xv = nodes[*x].value.data();
            let vv = nodes[*v].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    for j in 0..cols {
                        dx[i * cols + j] += g[i * cols + j] * vv[i];
                    }
                }
            });
            accumulate(grads, nodes, *v, |dv| {
                for i in 0..rows {
                    let mut s = 0.0;
                    for j in 0..cols {
                        s += g[i * cols + j] * xv[i * cols + j];
                    }
                    dv[i] += s;
                }
            });
        }
        Op::ScaleCols(x, v) => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            let xv = nodes[*x].value.data();
            let vv = nodes[*v].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    for j in 0..cols {
                        dx[i * cols + j] += g[i * cols + j] * vv[j];
                    }
                }
            });
            accumulate(grads, nodes, *v, |dv| {
                for i in 0..rows {
                    for j in 0..cols {
                        dv[j] += g[i * cols + j] * xv[i * cols + j];
                    }
                }
            });
        }
        Op::Affine(x, scale) => {
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..g.len() {
                    dx[i] += g[i] * scale;
                }
            });
        }
        Op::LeakyRelu(x, slope) => {
            let xv = nodes[*x].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..g.len() {
                    dx[i] += if xv[i] >= 0.0 { g[i] } else { g[i] * slope };
                }
            });
        }
        Op::Sigmoid(x) => accumulate(grads, nodes, *x, |dx| {
            for i in 0..g.len() {
                dx[i] += g[i] * out[i] * (1.0 - out[i]);
            }
        }),
        Op::Tanh(x) => accumulate(grads, nodes, *x, |dx| {
            for i in 0..g.len() {
                dx[i] += g[i] * (1.0 - out[i] * out[i]);
            }
        }),
        Op::ClampMin(x, floor) => {
            let xv = nodes[*x].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..g.len() {
                    if xv[i] > *floor {
                        dx[i] += g[i];
                    }
                }
            });
        }
        Op::Powf(x, p) => {
            let xv = nodes[*x].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..g.len() {
                    dx[i] += g[i] * p * xv[i].powf(p - 1.0);
                }
            });
        }
        Op::Transpose(x) => {
            let (r, c) = nodes[*x].value.dims2().unwrap();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] += g[j * r + i];
                    }
                }
            });
        }
        Op::SliceCols(x, start) => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            let width = g.len() / rows.max(1);
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    add_into(
                        &mut dx[i * cols + start..i * cols + start + width],
                        &g[i * width..(i + 1) * width],
                    );
                }
            });
        }
        Op::SumRows(x) => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    for j in 0..cols {
                        dx[i * cols + j] += g[i];
                    }
                }
            });
        }
        Op::SumCols(x) => {
            let (_, cols) = nodes[*x].value.dims2().unwrap();
            accumulate(grads, nodes, *x, |dx| {
                for row in dx.chunks_mut(cols) {
                    add_into(row, g);
                }
            });
        }
        Op::Sum(x) => accumulate(grads, nodes, *x, |dx| {
            for d in dx.iter_mut() {
                *d += g[0];
            }
        }),
        Op::Mean(x) => accumulate(grads, nodes, *x, |dx| {
            let s = g[0] / dx.len() as f64;
            for d in dx.iter_mut() {
                *d += s;
            }
        }),
        Op::Diag(x) => {
            let (n, _) = nodes[*x].value.dims2().unwrap();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..n {
                    dx[i * n + i] += g[i];
                }
            });
        }
        Op::LogSumExpRows(x) => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            let xv = nodes[*x].value.data();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    for j in 0..cols {
                        dx[i * cols + j] += g[i] * (xv[i * cols + j] - out[i]).exp();
                    }
                }
            });
        }
        Op::NormalizeRows { x, denom, clamped } => {
            let (rows, cols) = nodes[*x].value.dims2().unwrap();
            accumulate(grads, nodes, *x, |dx| {
                for i in 0..rows {
                    let y = &out[i * cols..(i + 1) * cols];
                    let gy = &g[i * cols..(i + 1) * cols];
                    let dot = if clamped[i] {
                        0.0
                    } else {
                        y.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>()
                    };
                    for j in 0..cols {
                        dx[i * cols + j] += (gy[j] - y[j] * dot) / denom[i];
                    }
                }
            });
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            train,
        } => {
            let (n, d) = nodes[*x].value.dims2().unwrap();
            let gv = nodes[*gamma].value.data();
            let mut sum_g = vec![0.0; d];
            let mut sum_gx = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    sum_g[j] += g[i * d + j];
                    sum_gx[j] += g[i * d + j] * xhat[i * d + j];
                }
            }
            accumulate(grads, nodes, *beta, |db| add_into(db, &sum_g));
            accumulate(grads, nodes, *gamma, |dg| add_into(dg, &sum_gx));
            accumulate(grads, nodes, *x, |dx| {
                let nf = n as f64;
                for i in 0..n {
                    for j in 0..d {
                        let k = i * d + j;
                        dx[k] += if *train {
                            gv[j] * inv_std[j] / nf
                                * (nf * g[k] - sum_g[j] - xhat[k] * sum_gx[j])
                        } else {
                            gv[j] * inv_std[j] * g[k]
                        };
                    }
                }
            });
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_of(self.id).shape().to_vec()
    }

    /// Copy of the recorded value.
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id).clone()
    }

    pub fn item(&self) -> Result<f64, DiffError> {
        self.tape.value_of(self.id).item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(&[self.id])
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<(), DiffError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(DiffError::Detached)
        }
    }

    fn unary(&self, op: Op, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let value = f(&self.tape.value_of(self.id));
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn elementwise(
        &self,
        other: &Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, DiffError> {
        self.same_tape(other)?;
        let value = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            if a.shape() != b.shape() {
                return Err(shape_err(name, &a, &b));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, op, rg))
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.same_tape(other)?;
        let value = {
            let a = self.tape.value_of(self.id);
            let b = self.tape.value_of(other.id);
            a.matmul(&b).map_err(|_| shape_err("matmul", &a, &b))?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.elementwise(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.elementwise(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.elementwise(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Adds a length-`C` row (any shape with `C` elements) to every row.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.same_tape(bias)?;
        let value = {
            let x = self.tape.value_of(self.id);
            let b = self.tape.value_of(bias.id);
            let (_, cols) = x.dims2()?;
            if b.numel() != cols {
                return Err(shape_err("add_row", &x, &b));
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(cols) {
                add_into(row, b.data());
            }
            out
        };
        let rg = self.tape.requires(&[self.id, bias.id]);
        Ok(self.tape.push(value, Op::AddRow(self.id, bias.id), rg))
    }

    /// Multiplies row `i` by `v[i]`; `v` holds one element per row.
    pub fn scale_rows(&self, v: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.same_tape(v)?;
        let value = {
            let x = self.tape.value_of(self.id);
            let s = self.tape.value_of(v.id);
            let (rows, cols) = x.dims2()?;
            if s.numel() != rows {
                return Err(shape_err("scale_rows", &x, &s));
            }
            let mut out = x.clone();
            for (row, &f) in out.data_mut().chunks_mut(cols.max(1)).zip(s.data()) {
                row.iter_mut().for_each(|e| *e *= f);
            }
            out
        };
        let rg = self.tape.requires(&[self.id, v.id]);
        Ok(self.tape.push(value, Op::ScaleRows(self.id, v.id), rg))
    }

    /// Multiplies column `j` by `v[j]`.
    pub fn scale_cols(&self, v: &Var<'t>) -> Result<Var<'t>, DiffError> {
        self.same_tape(v)?;
        let value = {
            let x = self.tape.value_of(self.id);
            let s = self.tape.value_of(v.id);
            let (_, cols) = x.dims2()?;
            if s.numel() != cols {
                return Err(shape_err("scale_cols", &x, &s));
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(cols.max(1)) {
                row.iter_mut().zip(s.data()).for_each(|(e, f)| *e *= f);
            }
            out
        };
        let rg = self.tape.requires(&[self.id, v.id]);
        Ok(self.tape.push(value, Op::ScaleCols(self.id, v.id), rg))
    }

    /// `scale * x + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Var<'t> {
        self.unary(Op::Affine(self.id, scale), |x| x.map(|v| scale * v + shift))
    }

    pub fn scale(&self, factor: f64) -> Var<'t> {
        self.affine(factor, 0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(Op::LeakyRelu(self.id, slope), |x| {
            x.map(|v| if v >= 0.0 { v } else { slope * v })
        })
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| x.map(stable_sigmoid))
    }

    pub fn tanh(&self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), |x| x.map(f64::tanh))
    }

    /// `max(x, floor)`; the gradient is zero where the floor binds.
    pub fn clamp_min(&self, floor: f64) -> Var<'t> {
        self.unary(Op::ClampMin(self.id, floor), |x| x.map(|v| v.max(floor)))
    }

    pub fn powf(&self, p: f64) -> Var<'t> {
        self.unary(Op::Powf(self.id, p), |x| x.map(|v| v.powf(p)))
    }

    pub fn transpose(&self) -> Result<Var<'t>, DiffError> {
        let value = self.tape.value_of(self.id).transpose()?;
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::Transpose(self.id), rg))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Var<'t>, DiffError> {
        let value = {
            let x = self.tape.value_of(self.id);
            let (rows, cols) = x.dims2()?;
            if start + width > cols {
                return Err(DiffError::Shape {
                    op: "slice_cols",
                    lhs: x.shape().to_vec(),
                    rhs: vec![start, width],
                });
            }
            let mut out = Vec::with_capacity(rows * width);
            for row in x.data().chunks(cols) {
                out.extend_from_slice(&row[start..start + width]);
            }
            Tensor::new(vec![rows, width], out)?
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::SliceCols(self.id, start), rg))
    }

    /// Row sums as an `N x 1` column.
    pub fn sum_rows(&self) -> Result<Var<'t>, DiffError> {
        let value = {
            let x = self.tape.value_of(self.id);
            let (rows, cols) = x.dims2()?;
            let data = x.data().chunks(cols.max(1)).map(|r| r.iter().sum()).collect();
            Tensor::new(vec![rows, 1], data)?
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::SumRows(self.id), rg))
    }

    /// Column sums as a `1 x C` row.
    pub fn sum_cols(&self) -> Result<Var<'t>, DiffError> {
        let value = {
            let x = self.tape.value_of(self.id);
            let (_, cols) = x.dims2()?;
            let mut data = vec![0.0; cols];
            for row in x.data().chunks(cols.max(1)) {
                add_into(&mut data, row);
            }
            Tensor::new(vec![1, cols], data)?
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::SumCols(self.id), rg))
    }

    pub fn sum(&self) -> Var<'t> {
        self.unary(Op::Sum(self.id), |x| Tensor::scalar(x.sum()))
    }

    pub fn mean(&self) -> Var<'t> {
        self.unary(Op::Mean(self.id), |x| {
            Tensor::scalar(x.sum() / x.numel().max(1) as f64)
        })
    }

    /// Diagonal of a square matrix as an `N x 1` column.
    pub fn diag(&self) -> Result<Var<'t>, DiffError> {
        let value = {
            let x = self.tape.value_of(self.id);
            let (r, c) = x.dims2()?;
            if r != c {
                return Err(DiffError::Shape {
                    op: "diag",
                    lhs: x.shape().to_vec(),
                    rhs: vec![r, r],
                });
            }
            Tensor::new(vec![r, 1], (0..r).map(|i| x.at(i, i)).collect())?
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::Diag(self.id), rg))
    }

    /// Stabilized `log(sum_j exp(x_ij))` per row, as an `N x 1` column.
    pub fn logsumexp_rows(&self) -> Result<Var<'t>, DiffError> {
        let value = {
            let x = self.tape.value_of(self.id);
            let (rows, cols) = x.dims2()?;
            let data = x
                .data()
                .chunks(cols.max(1))
                .map(|r| {
                    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    m + r.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
                })
                .collect();
            Tensor::new(vec![rows, 1], data)?
        };
        let rg = self.tape.requires(&[self.id]);
        Ok(self.tape.push(value, Op::LogSumExpRows(self.id), rg))
    }

    /// Divides each row by `max(||row||, floor)`.
    pub fn normalize_rows(&self, floor: f64) -> Result<Var<'t>, DiffError> {
        let (value, denom, clamped) = {
            let x = self.tape.value_of(self.id);
            let (_, cols) = x.dims2()?;
            let mut out = x.clone();
            let mut denom = Vec::new();
            let mut clamped = Vec::new();
            for row in out.data_mut().chunks_mut(cols.max(1)) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d = norm.max(floor);
                row.iter_mut().for_each(|v| *v /= d);
                denom.push(d);
                clamped.push(norm <= floor);
            }
            (out, denom, clamped)
        };
        let rg = self.tape.requires(&[self.id]);
        let op = Op::NormalizeRows {
            x: self.id,
            denom,
            clamped,
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Per-column normalization over the rows of an `N x D` matrix.
    ///
    /// Train mode normalizes with the biased batch variance and returns the
    /// batch statistics; eval mode uses the supplied running statistics.
    pub fn batch_norm(
        &self,
        gamma: &Var<'t>,
        beta: &Var<'t>,
        eps: f64,
        mode: NormMode<'_>,
    ) -> Result<(Var<'t>, Option<BatchStats>), DiffError> {
        self.same_tape(gamma)?;
        self.same_tape(beta)?;
        let (value, xhat, inv_std, stats) = {
            let x = self.tape.value_of(self.id);
            let g = self.tape.value_of(gamma.id);
            let b = self.tape.value_of(beta.id);
            let (n, d) = x.dims2()?;
            if g.numel() != d || b.numel() != d {
                return Err(shape_err("batch_norm", &x, &g));
            }
            if n == 0 {
                return Err(DiffError::Shape {
                    op: "batch_norm",
                    lhs: x.shape().to_vec(),
                    rhs: vec![1, d],
                });
            }
            let (mean, var, stats) = match mode {
                NormMode::Train => {
                    let mut mean = vec![0.0; d];
                    for row in x.data().chunks(d) {
                        add_into(&mut mean, row);
                    }
                    mean.iter_mut().for_each(|m| *m /= n as f64);
                    let mut var = vec![0.0; d];
                    for row in x.data().chunks(d) {
                        for j in 0..d {
                            let c = row[j] - mean[j];
                            var[j] += c * c;
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n as f64);
                    let stats = BatchStats {
                        mean: mean.clone(),
                        var: var.clone(),
                    };
                    (mean, var, Some(stats))
                }
                NormMode::Eval { mean, var } => {
                    if mean.len() != d || var.len() != d {
                        return Err(DiffError::Shape {
                            op: "batch_norm",
                            lhs: x.shape().to_vec(),
                            rhs: vec![mean.len()],
                        });
                    }
                    (mean.to_vec(), var.to_vec(), None)
                }
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            let mut xhat = vec![0.0; n * d];
            let mut out = vec![0.0; n * d];
            for i in 0..n {
                for j in 0..d {
                    let k = i * d + j;
                    xhat[k] = (x.data()[k] - mean[j]) * inv_std[j];
                    out[k] = g.data()[j] * xhat[k] + b.data()[j];
                }
            }
            (Tensor::new(vec![n, d], out)?, xhat, inv_std, stats)
        };
        let rg = self.tape.requires(&[self.id, gamma.id, beta.id]);
        let op = Op::BatchNorm {
            x: self.id,
            gamma: gamma.id,
            beta: beta.id,
            xhat,
            inv_std,
            train: matches!(mode, NormMode::Train),
        };
        Ok((self.tape.push(value, op, rg), stats))
    }
}

/// `1 / (1 + exp(-x))` without overflow for large `|x|`.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
