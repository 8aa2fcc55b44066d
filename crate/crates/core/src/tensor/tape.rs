use super::gemm::{gemm, MatView};
use super::{Result, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Backward rule of a custom op: `(input, output, upstream) -> input gradient`.
pub type CustomBackward = Box<dyn Fn(&Tensor, &Tensor, &Tensor) -> Tensor>;

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
        shared_b: bool,
    },
    Add {
        a: Var,
        b: Var,
        a_is_full: bool,
    },
    Sub {
        a: Var,
        b: Var,
        a_is_full: bool,
    },
    Mul {
        a: Var,
        b: Var,
        a_is_full: bool,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Softmax {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    Mean {
        x: Var,
        axis: usize,
    },
    Sum {
        x: Var,
    },
    SumSquares {
        x: Var,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
    Custom {
        x: Var,
        backward: CustomBackward,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Concat { .. } => "concat",
            Op::Narrow { .. } => "narrow",
            Op::Reshape { .. } => "reshape",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Tanh { .. } => "tanh",
            Op::Softmax { .. } => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gather { .. } => "gather",
            Op::Mean { .. } => "mean",
            Op::Sum { .. } => "sum",
            Op::SumSquares { .. } => "sum_squares",
            Op::BceWithLogits { .. } => "bce_with_logits",
            Op::Custom { .. } => "custom",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Layer-norm variance epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Records a computation in creation order. Single-threaded; build a fresh
/// tape per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

/// Output shape of an elementwise binary op and whether `a` is the full-size operand.
fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, bool)> {
    if is_suffix(b, a) {
        Ok((a.to_vec(), true))
    } else if is_suffix(a, b) {
        Ok((b.to_vec(), false))
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
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

/// Sum `g` (full shape) down to a suffix-shaped tensor.
fn reduce_to_suffix(g: &[f64], suffix_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; suffix_len];
    for chunk in g.chunks_exact(suffix_len.max(1)) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Differentiable leaf (parameter or input whose gradient is wanted).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, false)
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    /// `a · b`. `a` is `[.., m, k]`; `b` is either a shared `[k, n]` matrix
    /// (broadcast over the leading dims of `a`) or `[.., k, n]` with the same
    /// leading dims.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes of `b`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let (ash, bsh) = (av.shape(), bv.shape());
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: ash.to_vec(),
            rhs: bsh.to_vec(),
        };
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (br, bc) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        let (bk, n) = if trans_b { (bc, br) } else { (br, bc) };
        if bk != k {
            return Err(mismatch());
        }
        let shared_b = bsh.len() == 2;
        if !shared_b && bsh[..bsh.len() - 2] != ash[..ash.len() - 2] {
            return Err(mismatch());
        }
        let mut out_shape = ash[..ash.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![0.0; out_shape.iter().product()];
        let bview = |data| {
            let v = MatView::new(data, br, bc);
            if trans_b {
                v.t()
            } else {
                v
            }
        };
        if shared_b {
            let rows: usize = ash[..ash.len() - 1].iter().product();
            gemm(
                MatView::new(av.data(), rows, k),
                bview(bv.data()),
                &mut out,
                false,
            );
        } else {
            let batches: usize = ash[..ash.len() - 2].iter().product();
            for i in 0..batches {
                gemm(
                    MatView::new(&av.data()[i * m * k..(i + 1) * m * k], m, k),
                    bview(&bv.data()[i * k * n..(i + 1) * k * n]),
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let value = Tensor::new(out_shape, out)?;
        self.push(
            Op::MatMul {
                a,
                b,
                trans_b,
                shared_b,
            },
            value,
            &[a, b],
        )
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let (shape, a_is_full) = broadcast_shapes(name, av.shape(), bv.shape())?;
        let (full, part) = if a_is_full { (av, bv) } else { (bv, av) };
        let plen = part.numel().max(1);
        let data = full
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = part.data()[i % plen];
                if a_is_full {
                    f(x, y)
                } else {
                    f(y, x)
                }
            })
            .collect();
        Ok((Tensor::new(shape, data)?, a_is_full))
    }

    /// Elementwise sum; the smaller operand's shape must be a suffix of the other's.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, a_is_full) = self.elementwise("add", a, b, |x, y| x + y)?;
        self.push(Op::Add { a, b, a_is_full }, value, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, a_is_full) = self.elementwise("sub", a, b, |x, y| x - y)?;
        self.push(Op::Sub { a, b, a_is_full }, value, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, a_is_full) = self.elementwise("mul", a, b, |x, y| x * y)?;
        self.push(Op::Mul { a, b, a_is_full }, value, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = self.nodes[x.0].value.map(|v| v * factor);
        self.push(Op::Scale { x, factor }, value, &[x])
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| TensorError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.nodes[first.0].value.shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidAxis {
                op: "concat",
                axis,
                shape: base,
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.nodes[v.0].value.shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = &self.nodes[v.0].value;
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(shape, data)?;
        self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            value,
            inputs,
        )
    }

    /// Slice `len` entries starting at `start` along `axis` (rank preserved).
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let shape = t.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis {
                op: "narrow",
                axis,
                shape,
            });
        }
        if start + len > shape[axis] {
            return Err(TensorError::Invalid {
                op: "narrow",
                msg: format!(
                    "range {start}..{} exceeds axis size {}",
                    start + len,
                    shape[axis]
                ),
            });
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, data)?;
        self.push(Op::Narrow { x, axis, start }, value, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != t.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = Tensor::new(shape.to_vec(), t.data().to_vec())?;
        self.push(Op::Reshape { x }, value, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.nodes[x.0].value.map(|v| v.max(0.0));
        self.push(Op::Relu { x }, value, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.nodes[x.0].value.map(sigmoid);
        self.push(Op::Sigmoid { x }, value, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.nodes[x.0].value.map(f64::tanh);
        self.push(Op::Tanh { x }, value, &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let d = *t.shape().last().ok_or_else(|| TensorError::Invalid {
            op: "softmax",
            msg: "scalar input".into(),
        })?;
        let mut data = t.data().to_vec();
        for row in data.chunks_exact_mut(d.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push(Op::Softmax { x }, value, &[x])
    }

    /// Layer normalization over the last axis with learned `gamma`/`beta` of
    /// that axis' length.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let d = *t.shape().last().ok_or_else(|| TensorError::Invalid {
            op: "layer_norm",
            msg: "scalar input".into(),
        })?;
        for p in [gamma, beta] {
            let s = self.nodes[p.0].value.shape();
            if s != [d] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: t.shape().to_vec(),
                    rhs: s.to_vec(),
                });
            }
        }
        let g = self.nodes[gamma.0].value.data();
        let b = self.nodes[beta.0].value.data();
        let rows = t.numel() / d.max(1);
        let mut xhat = vec![0.0; t.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; t.numel()];
        for r in 0..rows {
            let row = &t.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                xhat[r * d + j] = xh;
                out[r * d + j] = g[j] * xh + b[j];
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            value,
            &[x, gamma, beta],
        )
    }

    /// Rows `indices` of a `[V, D]` table, giving `[indices.len(), D]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = &self.nodes[table.0].value;
        if t.ndim() != 2 {
            return Err(TensorError::Invalid {
                op: "gather",
                msg: format!("table must be 2-D, got {:?}", t.shape()),
            });
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(TensorError::Invalid {
                    op: "gather",
                    msg: format!("index {i} out of range for {v} rows"),
                });
            }
            data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![indices.len(), d], data)?;
        self.push(
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
            value,
            &[table],
        )
    }

    /// Mean over `axis` (the axis is removed).
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let shape = t.shape().to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(TensorError::InvalidAxis {
                op: "mean",
                axis,
                shape,
            });
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let src = &t.data()[(o * n + i) * inner..(o * n + i + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        for v in &mut data {
            *v /= n as f64;
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, data)?;
        self.push(Op::Mean { x, axis }, value, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.nodes[x.0].value.sum());
        self.push(Op::Sum { x }, value, &[x])
    }

    /// `Σ x²` as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.data().iter().map(|v| v * v).sum();
        self.push(Op::SumSquares { x }, Tensor::scalar(s), &[x])
    }

    /// Mean binary cross-entropy of `logits` against 0/1 `targets`, computed
    /// in logit space.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let t = &self.nodes[logits.0].value;
        if t.numel() != targets.len() || targets.is_empty() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: t.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(TensorError::NonFinite {
                op: "bce_with_logits",
            });
        }
        let total: f64 = t
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / targets.len() as f64);
        self.push(
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            value,
            &[logits],
        )
    }

    /// Single-input op with a caller-supplied forward and backward rule.
    pub fn custom(
        &mut self,
        x: Var,
        forward: impl Fn(&Tensor) -> Tensor,
        backward: CustomBackward,
    ) -> Result<Var> {
        let value = forward(&self.nodes[x.0].value);
        self.push(Op::Custom { x, backward }, value, &[x])
    }

    /// Reverse sweep from a scalar `loss`. Gradients are summed over every use
    /// of a node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Vec<f64>) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta) {
                    *e += d;
                }
            }
            slot @ None => {
                let shape = self.nodes[var.0].value.shape().to_vec();
                *slot = Some(Tensor { shape, data: delta });
            }
        }
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul {
                a,
                b,
                trans_b,
                shared_b,
            } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let ash = av.shape();
                let bsh = bv.shape();
                let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
                let (br, bc) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
                let n = if *trans_b { br } else { bc };
                let batches: usize = if *shared_b {
                    1
                } else {
                    ash[..ash.len() - 2].iter().product()
                };
                let rows: usize = if *shared_b {
                    ash[..ash.len() - 1].iter().product()
                } else {
                    m
                };
                if self.wants(*a) {
                    let mut da = vec![0.0; av.numel()];
                    for i in 0..batches {
                        let gs = &gd[i * rows * n..(i + 1) * rows * n];
                        let bs = &bv.data()[i * br * bc..(i + 1) * br * bc];
                        let bview = MatView::new(bs, br, bc);
                        // dA = dC · op(B)ᵀ
                        let bt = if *trans_b { bview } else { bview.t() };
                        gemm(
                            MatView::new(gs, rows, n),
                            bt,
                            &mut da[i * rows * k..(i + 1) * rows * k],
                            false,
                        );
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; bv.numel()];
                    for i in 0..batches {
                        let gs = MatView::new(&gd[i * rows * n..(i + 1) * rows * n], rows, n);
                        let as_ =
                            MatView::new(&av.data()[i * rows * k..(i + 1) * rows * k], rows, k);
                        let out = &mut db[i * br * bc..(i + 1) * br * bc];
                        if *trans_b {
                            // B is [n, k]: dB = dCᵀ · A
                            gemm(gs.t(), as_, out, false);
                        } else {
                            // B is [k, n]: dB = Aᵀ · dC
                            gemm(as_.t(), gs, out, false);
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add { a, b, a_is_full } | Op::Sub { a, b, a_is_full } => {
                let sign_b = if matches!(node.op, Op::Sub { .. }) {
                    -1.0
                } else {
                    1.0
                };
                let (full, part, part_sign, full_sign) = if *a_is_full {
                    (*a, *b, sign_b, 1.0)
                } else {
                    (*b, *a, 1.0, sign_b)
                };
                if self.wants(full) {
                    self.accumulate(grads, full, gd.iter().map(|v| v * full_sign).collect());
                }
                if self.wants(part) {
                    let plen = self.nodes[part.0].value.numel();
                    let mut r = reduce_to_suffix(gd, plen);
                    if part_sign != 1.0 {
                        r.iter_mut().for_each(|v| *v *= part_sign);
                    }
                    self.accumulate(grads, part, r);
                }
            }
            Op::Mul { a, b, a_is_full } => {
                let (full, part) = if *a_is_full { (*a, *b) } else { (*b, *a) };
                let fv = self.nodes[full.0].value.data();
                let pv = self.nodes[part.0].value.data();
                let plen = pv.len().max(1);
                if self.wants(full) {
                    let d = gd
                        .iter()
                        .enumerate()
                        .map(|(i, g)| g * pv[i % plen])
                        .collect();
                    self.accumulate(grads, full, d);
                }
                if self.wants(part) {
                    let prod: Vec<f64> = gd.iter().zip(fv).map(|(g, f)| g * f).collect();
                    self.accumulate(grads, part, reduce_to_suffix(&prod, pv.len()));
                }
            }
            Op::Scale { x, factor } => {
                self.accumulate(grads, *x, gd.iter().map(|v| v * factor).collect());
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let len = self.nodes[v.0].value.shape()[*axis];
                    if self.wants(*v) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        self.accumulate(grads, *v, d);
                    }
                    offset += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.nodes[x.0].value.shape();
                let (outer, n, inner) = split_axis(xs, *axis);
                let len = node.value.shape()[*axis];
                let mut d = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let dst = o * n * inner + start * inner;
                    d[dst..dst + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(grads, *x, d);
            }
            Op::Reshape { x } => self.accumulate(grads, *x, gd.to_vec()),
            Op::Relu { x } => {
                let xv = self.nodes[x.0].value.data();
                let d = gd
                    .iter()
                    .zip(xv)
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::Tanh { x } => {
                let y = node.value.data();
                let d = gd.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let dlen = *node.value.shape().last().unwrap_or(&1);
                let mut d = vec![0.0; y.len()];
                for ((dr, yr), gr) in d
                    .chunks_exact_mut(dlen.max(1))
                    .zip(y.chunks_exact(dlen.max(1)))
                    .zip(gd.chunks_exact(dlen.max(1)))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..dr.len() {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.nodes[gamma.0].value.data();
                let d = gam.len();
                if self.wants(*x) {
                    let mut dx = vec![0.0; xhat.len()];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let gr = &gd[r * d..(r + 1) * d];
                        let xr = &xhat[r * d..(r + 1) * d];
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xr[j];
                        }
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            dx[r * d + j] =
                                is / d as f64 * (d as f64 * dxh - sum_dxh - xr[j] * sum_dxh_xh);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.wants(*gamma) {
                    let prod: Vec<f64> = gd.iter().zip(xhat).map(|(g, h)| g * h).collect();
                    self.accumulate(grads, *gamma, reduce_to_suffix(&prod, d));
                }
                if self.wants(*beta) {
                    self.accumulate(grads, *beta, reduce_to_suffix(gd, d));
                }
            }
            Op::Gather { table, indices } => {
                let tv = &self.nodes[table.0].value;
                let dim = tv.shape()[1];
                let mut d = vec![0.0; tv.numel()];
                for (row, &i) in indices.iter().enumerate() {
                    for j in 0..dim {
                        d[i * dim + j] += gd[row * dim + j];
                    }
                }
                self.accumulate(grads, *table, d);
            }
            Op::Mean { x, axis } => {
                let xs = self.nodes[x.0].value.shape();
                let (outer, n, inner) = split_axis(xs, *axis);
                let mut d = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..n {
                        for j in 0..inner {
                            d[(o * n + i) * inner + j] = gd[o * inner + j] / n as f64;
                        }
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::Sum { x } => {
                let n = self.nodes[x.0].value.numel();
                self.accumulate(grads, *x, vec![gd[0]; n]);
            }
            Op::SumSquares { x } => {
                let xv = self.nodes[x.0].value.data();
                self.accumulate(grads, *x, xv.iter().map(|v| 2.0 * v * gd[0]).collect());
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.nodes[logits.0].value.data();
                let n = targets.len() as f64;
                let d = z
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| gd[0] * (sigmoid(z) - y) / n)
                    .collect();
                self.accumulate(grads, *logits, d);
            }
            Op::Custom { x, backward } => {
                let d = backward(&self.nodes[x.0].value, &node.value, g);
                if d.shape() != self.nodes[x.0].value.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "custom",
                        lhs: self.nodes[x.0].value.shape().to_vec(),
                        rhs: d.shape().to_vec(),
                    });
                }
                self.accumulate(grads, *x, d.into_data());
            }
        }
        Ok(())
    }
}
