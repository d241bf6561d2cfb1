//! Wengert tape: reverse-mode differentiation via operation recording.
//!
//! Ops append nodes to an arena during the forward pass; `backward`
//! replays the arena in reverse, which is already a reverse topological
//! order, visiting each node exactly once. A tape is single-threaded and
//! consumed by `backward`; tensors detach from it freely.
//!
//! The primitive set is exactly what the models and losses need: matmul,
//! add, scale, gelu, softmax, log, sum-reduce, gather, mask-fill,
//! layer-norm, plus the slicing/concat plumbing for attention heads and
//! modality ranges. No broadcasting beyond row-wise bias addition; every
//! other shape coercion is explicit.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a tape. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = A @ B, A: [m,k], B: [k,n]
    MatMul,
    /// out = A^T
    Transpose,
    /// out = A + B, same shape
    Add,
    /// out[r,c] = A[r,c] + bias[c] (the one permitted broadcast)
    AddRow,
    /// elementwise product, same shape
    Mul,
    Scale(f64),
    AddScalar,
    /// exact erf-based GELU
    Gelu,
    /// row-wise softmax over the last dimension of a 2-D tensor
    Softmax,
    Log,
    Powf(f64),
    /// full reduction to a [1] scalar
    Sum,
    /// out[i] = A[rows[i], :] — embedding-style row gather
    GatherRows(Vec<usize>),
    /// out[i] = if mask[i] { value } else { A[i] }; gradient is blocked
    /// at filled entries
    MaskFill { mask: Vec<bool> },
    /// inputs: (x [r,c], gamma [c], beta [c]); row-wise normalization
    LayerNorm { eps: f64 },
    SliceRows { start: usize, end: usize },
    SliceCols { start: usize, end: usize },
    ConcatRows,
    ConcatCols,
}

struct Node {
    op: Op,
    inputs: Vec<Var>,
    shape: Vec<usize>,
    value: Vec<f64>,
    needs_grad: bool,
}

/// Records a forward computation and differentiates it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, if any flowed to it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient as a tensor, zeros if nothing flowed.
    pub fn tensor(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn gelu_grad_scalar(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn softmax_rows(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..cols {
            let e = (row[c] - max).exp();
            out[r * cols + c] = e;
            denom += e;
        }
        for c in 0..cols {
            out[r * cols + c] /= denom;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register an input tensor. It participates in backward iff
    /// `requires_grad` is set on the tensor.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, vec![], t.shape().to_vec(), t.data().to_vec(), t.requires_grad)
    }

    /// Register an input that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, vec![], t.shape().to_vec(), t.data().to_vec(), false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.push(Op::Leaf, vec![], vec![1], vec![v], false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn item(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].value.clone())
            .expect("node shape")
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, shape: Vec<usize>, value: Vec<f64>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, inputs, shape, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op, inputs: Vec<Var>, shape: Vec<usize>, value: Vec<f64>) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(op, inputs, shape, value, needs_grad)
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = &self.nodes[v.0].shape;
        if s.len() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("expected a 2-d tensor, got shape {s:?}"),
            });
        }
        Ok((s[0], s[1]))
    }

    // ── primitives ───────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.dims2("matmul", a)?;
        let (kb, n) = self.dims2("matmul", b)?;
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {ka} vs {kb} ([{m}x{ka}] @ [{kb}x{n}])"),
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for k in 0..ka {
                let aik = av[i * ka + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(self.record(Op::MatMul, vec![a, b], vec![m, n], out))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("transpose", a)?;
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        Ok(self.record(Op::Transpose, vec![a], vec![c, r], out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", self.nodes[a.0].shape, self.nodes[b.0].shape),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.record(Op::Add, vec![a, b], shape, out))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims2("add_row", a)?;
        let bs = &self.nodes[bias.0].shape;
        if bs.as_slice() != [c] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                detail: format!("bias shape {bs:?} does not match row width {c}"),
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[bias.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = av[i * c + j] + bv[j];
            }
        }
        Ok(self.record(Op::AddRow, vec![a, bias], vec![r, c], out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", self.nodes[a.0].shape, self.nodes[b.0].shape),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.record(Op::Mul, vec![a, b], shape, out))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x * s).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.record(Op::Scale(s), vec![a], shape, out)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x + s).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.record(Op::AddScalar, vec![a], shape, out)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| gelu_scalar(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.record(Op::Gelu, vec![a], shape, out)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("softmax", a)?;
        let out = softmax_rows(r, c, &self.nodes[a.0].value);
        Ok(self.record(Op::Softmax, vec![a], vec![r, c], out))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.ln()).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.record(Op::Log, vec![a], shape, out)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.powf(p)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.record(Op::Powf(p), vec![a], shape, out)
    }

    /// Full sum-reduce to a `[1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.iter().sum();
        self.record(Op::Sum, vec![a], vec![1], vec![s])
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.dims2("gather_rows", a)?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::InvalidArgument {
                op: "gather_rows",
                detail: format!("row index {bad} out of range 0..{r}"),
            });
        }
        let av = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(&av[i * c..(i + 1) * c]);
        }
        Ok(self.record(Op::GatherRows(rows.to_vec()), vec![a], vec![rows.len(), c], out))
    }

    /// Replace entries where `mask` is true with `value`. Gradient does
    /// not flow through filled entries.
    pub fn mask_fill(&mut self, a: Var, mask: &[bool], value: f64) -> Result<Var> {
        if mask.len() != self.nodes[a.0].value.len() {
            return Err(Error::ShapeMismatch {
                op: "mask_fill",
                detail: format!(
                    "mask length {} vs tensor numel {}",
                    mask.len(),
                    self.nodes[a.0].value.len()
                ),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { value } else { x })
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.record(Op::MaskFill { mask: mask.to_vec() }, vec![a], shape, out))
    }

    /// Row-wise layer normalization with learned gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.dims2("layer_norm", x)?;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.nodes[v.0].shape.as_slice() != [c] {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    detail: format!("{name} shape {:?} vs width {c}", self.nodes[v.0].shape),
                });
            }
        }
        let xv = &self.nodes[x.0].value;
        let g = &self.nodes[gamma.0].value;
        let b = &self.nodes[beta.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        Ok(self.record(Op::LayerNorm { eps }, vec![x, gamma, beta], vec![r, c], out))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims2("slice_rows", a)?;
        if start >= end || end > r {
            return Err(Error::InvalidArgument {
                op: "slice_rows",
                detail: format!("range {start}..{end} out of 0..{r}"),
            });
        }
        let out = self.nodes[a.0].value[start * c..end * c].to_vec();
        Ok(self.record(Op::SliceRows { start, end }, vec![a], vec![end - start, c], out))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims2("slice_cols", a)?;
        if start >= end || end > c {
            return Err(Error::InvalidArgument {
                op: "slice_cols",
                detail: format!("range {start}..{end} out of 0..{c}"),
            });
        }
        let av = &self.nodes[a.0].value;
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&av[i * c + start..i * c + end]);
        }
        Ok(self.record(Op::SliceCols { start, end }, vec![a], vec![r, w], out))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2("concat_rows", a)?;
        let (rb, cb) = self.dims2("concat_rows", b)?;
        if ca != cb {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                detail: format!("widths {ca} vs {cb}"),
            });
        }
        let mut out = self.nodes[a.0].value.clone();
        out.extend_from_slice(&self.nodes[b.0].value);
        Ok(self.record(Op::ConcatRows, vec![a, b], vec![ra + rb, ca], out))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims2("concat_cols", a)?;
        let (rb, cb) = self.dims2("concat_cols", b)?;
        if ra != rb {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                detail: format!("heights {ra} vs {rb}"),
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        Ok(self.record(Op::ConcatCols, vec![a, b], vec![ra, ca + cb], out))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Consumes the tape; every leaf
    /// registered with `requires_grad` has its accumulated gradient in
    /// the returned [`Gradients`].
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::NonScalarLoss { shape: self.nodes[loss.0].shape.clone() });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let sink = |grads: &mut Vec<Option<Vec<f64>>>, v: Var, contribution: Vec<f64>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contribution) {
                            *a += c;
                        }
                    }
                    None => grads[v.0] = Some(contribution),
                }
            };

            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let n_ = self.nodes[b.0].shape[1];
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    // dA = G @ B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n_ {
                            let gij = g[i * n_ + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for k_ in 0..k {
                                da[i * k + k_] += gij * bv[k_ * n_ + j];
                            }
                        }
                    }
                    sink(&mut grads, a, da);
                    // dB = A^T @ G
                    let mut db = vec![0.0; k * n_];
                    for i in 0..m {
                        for k_ in 0..k {
                            let aik = av[i * k + k_];
                            if aik == 0.0 {
                                continue;
                            }
                            for j in 0..n_ {
                                db[k_ * n_ + j] += aik * g[i * n_ + j];
                            }
                        }
                    }
                    sink(&mut grads, b, db);
                }
                Op::Transpose => {
                    let a = node.inputs[0];
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = g[j * r + i];
                        }
                    }
                    sink(&mut grads, a, da);
                }
                Op::Add => {
                    sink(&mut grads, node.inputs[0], g.clone());
                    sink(&mut grads, node.inputs[1], g);
                }
                Op::AddRow => {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    sink(&mut grads, node.inputs[0], g.clone());
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] += g[i * c + j];
                        }
                    }
                    sink(&mut grads, node.inputs[1], db);
                }
                Op::Mul => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let da: Vec<f64> =
                        g.iter().zip(&self.nodes[b.0].value).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> =
                        g.iter().zip(&self.nodes[a.0].value).map(|(x, y)| x * y).collect();
                    sink(&mut grads, a, da);
                    sink(&mut grads, b, db);
                }
                Op::Scale(s) => {
                    let da: Vec<f64> = g.iter().map(|x| x * s).collect();
                    sink(&mut grads, node.inputs[0], da);
                }
                Op::AddScalar => {
                    sink(&mut grads, node.inputs[0], g);
                }
                Op::Gelu => {
                    let a = node.inputs[0];
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(gi, &x)| gi * gelu_grad_scalar(x))
                        .collect();
                    sink(&mut grads, a, da);
                }
                Op::Softmax => {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let p = &node.value;
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let dot: f64 =
                            (0..c).map(|j| g[i * c + j] * p[i * c + j]).sum();
                        for j in 0..c {
                            da[i * c + j] = p[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                    sink(&mut grads, node.inputs[0], da);
                }
                Op::Log => {
                    let a = node.inputs[0];
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(gi, x)| gi / x)
                        .collect();
                    sink(&mut grads, a, da);
                }
                Op::Powf(p) => {
                    let a = node.inputs[0];
                    let da: Vec<f64> = g
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(gi, &x)| gi * p * x.powf(p - 1.0))
                        .collect();
                    sink(&mut grads, a, da);
                }
                Op::Sum => {
                    let a = node.inputs[0];
                    let da = vec![g[0]; self.nodes[a.0].value.len()];
                    sink(&mut grads, a, da);
                }
                Op::GatherRows(rows) => {
                    let a = node.inputs[0];
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut da = vec![0.0; r * c];
                    for (out_i, &src) in rows.iter().enumerate() {
                        for j in 0..c {
                            da[src * c + j] += g[out_i * c + j];
                        }
                    }
                    sink(&mut grads, a, da);
                }
                Op::MaskFill { mask } => {
                    let da: Vec<f64> = g
                        .iter()
                        .zip(mask)
                        .map(|(&gi, &m)| if m { 0.0 } else { gi })
                        .collect();
                    sink(&mut grads, node.inputs[0], da);
                }
                Op::LayerNorm { eps } => {
                    let (x, gamma, _beta) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let xv = &self.nodes[x.0].value;
                    let gv = &self.nodes[gamma.0].value;
                    let mut dx = vec![0.0; r * c];
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for i in 0..r {
                        let row = &xv[i * c..(i + 1) * c];
                        let mean = row.iter().sum::<f64>() / c as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let grow = &g[i * c..(i + 1) * c];
                        let dxhat: Vec<f64> =
                            grow.iter().zip(gv).map(|(gi, gm)| gi * gm).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / c as f64;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(d, h)| d * h).sum::<f64>() / c as f64;
                        for j in 0..c {
                            dx[i * c + j] =
                                inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                            dgamma[j] += grow[j] * xhat[j];
                            dbeta[j] += grow[j];
                        }
                    }
                    sink(&mut grads, x, dx);
                    sink(&mut grads, gamma, dgamma);
                    sink(&mut grads, node.inputs[2], dbeta);
                }
                Op::SliceRows { start, end } => {
                    let a = node.inputs[0];
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let mut da = vec![0.0; r * c];
                    da[start * c..end * c].copy_from_slice(&g);
                    sink(&mut grads, a, da);
                }
                Op::SliceCols { start, end } => {
                    let a = node.inputs[0];
                    let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let w = end - start;
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        da[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    sink(&mut grads, a, da);
                }
                Op::ConcatRows => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let na = self.nodes[a.0].value.len();
                    sink(&mut grads, a, g[..na].to_vec());
                    sink(&mut grads, b, g[na..].to_vec());
                }
                Op::ConcatCols => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let (r, ca) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                    let cb = self.nodes[b.0].shape[1];
                    let mut da = vec![0.0; r * ca];
                    let mut db = vec![0.0; r * cb];
                    let w = ca + cb;
                    for i in 0..r {
                        da[i * ca..(i + 1) * ca].copy_from_slice(&g[i * w..i * w + ca]);
                        db[i * cb..(i + 1) * cb].copy_from_slice(&g[i * w + ca..(i + 1) * w]);
                    }
                    sink(&mut grads, a, da);
                    sink(&mut grads, b, db);
                }
            }
        }

        let shapes = self.nodes.into_iter().map(|n| n.shape).collect();
        Ok(Gradients { grads, shapes })
    }
}
