use std::borrow::Cow;
use std::collections::BTreeMap;

use super::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Index of a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    Softmax {
        x: NodeId,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(NodeId),
    Sigmoid(NodeId),
    Embed {
        table: NodeId,
        ids: Vec<usize>,
    },
    Bce {
        logit: NodeId,
        target: f64,
    },
    Sum(NodeId),
    Mean(NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatRows(Vec<NodeId>),
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, [f64]>,
    shape: Vec<usize>,
    op: Op,
    param: Option<ParamId>,
    fault: Option<f64>,
}

/// Parameter gradients produced by one backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.by_param.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

/// Records a forward computation for later differentiation.
///
/// Nodes are appended in execution order, so every input id precedes its
/// consumer and the tape is acyclic by construction. Parameter leaves borrow
/// their storage from the [`ParamSet`] rather than copying it.
#[derive(Debug)]
pub struct Tape<'p> {
    params: Option<&'p ParamSet>,
    param_nodes: BTreeMap<ParamId, NodeId>,
    nodes: Vec<Node<'p>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_cols(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [m, n] => Some((*m, *n)),
        _ => None,
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn transpose_buf(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x[i * n + j];
        }
    }
    out
}

fn add_into(acc: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match acc {
        Some(a) => a.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        None => *acc = Some(delta),
    }
}

impl<'p> Tape<'p> {
    /// A tape with no parameter set; only constants can be used as leaves.
    pub fn new() -> Self {
        Tape {
            params: None,
            param_nodes: BTreeMap::new(),
            nodes: Vec::new(),
        }
    }

    pub fn with_params(params: &'p ParamSet) -> Self {
        Tape {
            params: Some(params),
            param_nodes: BTreeMap::new(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, [f64]>, shape: Vec<usize>, op: Op) -> NodeId {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            param: None,
            fault: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node<'p> {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    pub fn to_tensor(&self, id: NodeId) -> Tensor {
        let n = self.node(id);
        Tensor {
            shape: n.shape.clone(),
            data: n.value.to_vec(),
            grad: None,
        }
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Cow::Owned(t.data), t.shape, Op::Leaf)
    }

    /// Leaf bound to a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<NodeId> {
        if let Some(&node) = self.param_nodes.get(&id) {
            return Ok(node);
        }
        let params = self
            .params
            .ok_or_else(|| Error::Contract("tape has no parameter set".into()))?;
        if id.0 >= params.len() {
            return Err(Error::Index {
                op: "param",
                index: id.0,
                size: params.len(),
            });
        }
        let t = params.get(id);
        let node = self.push(Cow::Borrowed(&t.data), t.shape.clone(), Op::Leaf);
        self.nodes[node.0].param = Some(id);
        self.param_nodes.insert(id, node);
        Ok(node)
    }

    /// Scales the upstream gradient flowing into `node`'s backward rule by
    /// `factor`. Only useful for exercising the gradient checker.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, node: NodeId, factor: f64) {
        self.nodes[node.0].fault = Some(factor);
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let dims = rows_cols(sa).zip(rows_cols(sb));
        let ((m, k), (k2, n)) = match dims {
            Some(d) if d.0 .1 == d.1 .0 => d,
            _ => {
                return Err(Error::shape(
                    "matmul",
                    format!("cannot multiply {:?} by {:?}", sa, sb),
                ))
            }
        };
        debug_assert_eq!(k, k2);
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(Cow::Owned(out), vec![m, n], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Cow::Owned(out), shape, Op::Add(a, b)))
    }

    /// `x[m×n] + bias[n]`, broadcasting the bias over rows.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = rows_cols(self.shape(x)).ok_or_else(|| {
            Error::shape(
                "add_row_bias",
                format!("x must be 2-D, got {:?}", self.shape(x)),
            )
        })?;
        if self.value(bias).len() != n {
            return Err(Error::shape(
                "add_row_bias",
                format!("bias {:?} does not match {} columns", self.shape(bias), n),
            ));
        }
        let bv = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n.max(1)).take(m) {
            row.iter_mut().zip(bv).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(Cow::Owned(out), vec![m, n], Op::AddRowBias(x, bias)))
    }

    /// Elementwise product of equal-shape tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Cow::Owned(out), shape, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        self.push(Cow::Owned(out), shape, Op::Scale(x, factor))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (m, n) = rows_cols(self.shape(x)).ok_or_else(|| {
            Error::shape(
                "transpose",
                format!("x must be 2-D, got {:?}", self.shape(x)),
            )
        })?;
        let out = transpose_buf(self.value(x), m, n);
        Ok(self.push(Cow::Owned(out), vec![n, m], Op::Transpose(x)))
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {} invalid for shape {:?}", axis, shape),
            ));
        }
        let xv = self.value(x);
        if xv.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len)
                    .map(|j| xv[idx(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (xv[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        Ok(self.push(Cow::Owned(out), shape, Op::Softmax { x, len, inner }))
    }

    /// Normalizes each row over the last dimension, then applies `gain` and `bias`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        let n = *shape
            .last()
            .ok_or_else(|| Error::shape("layer_norm", "x must have rank >= 1"))?;
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gain {:?} / bias {:?} must match last dim {}",
                    self.shape(gain),
                    self.shape(bias),
                    n
                ),
            ));
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let rows = xv.len().checked_div(n).unwrap_or(0);
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv[j] + bv[j];
            }
        }
        Ok(self.push(
            Cow::Owned(out),
            shape,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| gelu_fwd(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Cow::Owned(out), shape, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.value(x).iter().map(|&v| stable_sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Cow::Owned(out), shape, Op::Sigmoid(x))
    }

    /// Gathers rows of a `[V×d]` table.
    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (v, d) = rows_cols(self.shape(table)).ok_or_else(|| {
            Error::shape(
                "embed",
                format!("table must be 2-D, got {:?}", self.shape(table)),
            )
        })?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Index {
                op: "embed",
                index: bad,
                size: v,
            });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Cow::Owned(out),
            vec![ids.len(), d],
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Binary cross-entropy on a single logit, in the overflow-free form
    /// `max(z,0) - z*y + ln(1 + exp(-|z|))`.
    pub fn bce_loss(&mut self, logit: NodeId, target: f64) -> Result<NodeId> {
        if self.value(logit).len() != 1 {
            return Err(Error::shape(
                "bce_loss",
                format!(
                    "logit must be a single element, got {:?}",
                    self.shape(logit)
                ),
            ));
        }
        if target != 0.0 && target != 1.0 {
            return Err(Error::Contract(format!(
                "bce target must be 0 or 1, got {target}"
            )));
        }
        let z = self.scalar(logit);
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        Ok(self.push(Cow::Owned(vec![loss]), vec![1], Op::Bce { logit, target }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().sum();
        self.push(Cow::Owned(vec![s]), vec![1], Op::Sum(x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Cow::Owned(vec![s]), vec![1], Op::Mean(x))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = rows_cols(self.shape(x)).ok_or_else(|| {
            Error::shape(
                "slice_cols",
                format!("x must be 2-D, got {:?}", self.shape(x)),
            )
        })?;
        if start + len > n {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {}..{} out of {}", start, start + len, n),
            ));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&xv[r * n + start..r * n + start + len]);
        }
        Ok(self.push(Cow::Owned(out), vec![m, len], Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| rows_cols(self.shape(p)))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::shape("concat_cols", "all parts must be 2-D"))?;
        let m = dims.first().map_or(0, |d| d.0);
        if dims.iter().any(|d| d.0 != m) {
            return Err(Error::shape(
                "concat_cols",
                format!("row counts differ: {:?}", dims),
            ));
        }
        let n: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for (&p, &(_, w)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(Cow::Owned(out), vec![m, n], Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = rows_cols(self.shape(x)).ok_or_else(|| {
            Error::shape(
                "slice_rows",
                format!("x must be 2-D, got {:?}", self.shape(x)),
            )
        })?;
        if start + len > m {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {}..{} out of {}", start, start + len, m),
            ));
        }
        let out = self.value(x)[start * n..(start + len) * n].to_vec();
        Ok(self.push(Cow::Owned(out), vec![len, n], Op::SliceRows { x, start }))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| rows_cols(self.shape(p)))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::shape("concat_rows", "all parts must be 2-D"))?;
        let n = dims.first().map_or(0, |d| d.1);
        if dims.iter().any(|d| d.1 != n) {
            return Err(Error::shape(
                "concat_rows",
                format!("column counts differ: {:?}", dims),
            ));
        }
        let m: usize = dims.iter().map(|d| d.0).sum();
        let mut out = Vec::with_capacity(m * n);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(Cow::Owned(out), vec![m, n], Op::ConcatRows(parts.to_vec())))
    }

    /// Reverse-mode sweep from a single-element `root`, visiting nodes in
    /// exact reverse recording order.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=root.0).rev() {
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(f) = node.fault {
                g.iter_mut().for_each(|v| *v *= f);
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(pid) = node.param {
                        out.by_param.insert(pid, g);
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = rows_cols(self.shape(*a)).unwrap();
                    let n = node.shape[1];
                    let bt = transpose_buf(self.value(*b), k, n);
                    let mut da = vec![0.0; m * k];
                    gemm_acc(&g, &bt, &mut da, m, n, k);
                    let at = transpose_buf(self.value(*a), m, k);
                    let mut db = vec![0.0; k * n];
                    gemm_acc(&at, &g, &mut db, k, m, n);
                    add_into(&mut grads[a.0], da);
                    add_into(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], g.clone());
                    add_into(&mut grads[b.0], g);
                }
                Op::AddRowBias(x, bias) => {
                    let n = node.shape[1];
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n.max(1)) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    add_into(&mut grads[x.0], g);
                    add_into(&mut grads[bias.0], db);
                }
                Op::Mul(a, b) => {
                    let da = g.iter().zip(self.value(*b)).map(|(g, v)| g * v).collect();
                    let db = g.iter().zip(self.value(*a)).map(|(g, v)| g * v).collect();
                    add_into(&mut grads[a.0], da);
                    add_into(&mut grads[b.0], db);
                }
                Op::Scale(x, c) => {
                    add_into(&mut grads[x.0], g.iter().map(|v| v * c).collect());
                }
                Op::Transpose(x) => {
                    let (m, n) = (node.shape[0], node.shape[1]);
                    add_into(&mut grads[x.0], transpose_buf(&g, m, n));
                }
                Op::Softmax { x, len, inner } => {
                    let y = &node.value;
                    let (len, inner) = (*len, *inner);
                    let outer = y.len().checked_div(len * inner).unwrap_or(0);
                    let mut dx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + i;
                            let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            for j in 0..len {
                                dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let n = *node.shape.last().unwrap();
                    let gv = self.value(*gain);
                    let mut dx = vec![0.0; g.len()];
                    let mut dgain = vec![0.0; n];
                    let mut dbias = vec![0.0; n];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g[r * n..(r + 1) * n];
                        let xr = &xhat[r * n..(r + 1) * n];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * gv[j];
                            mean_d += dh;
                            mean_dx += dh * xr[j];
                            dgain[j] += gr[j] * xr[j];
                            dbias[j] += gr[j];
                        }
                        mean_d /= n as f64;
                        mean_dx /= n as f64;
                        for j in 0..n {
                            let dh = gr[j] * gv[j];
                            dx[r * n + j] = rs * (dh - mean_d - xr[j] * mean_dx);
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                    add_into(&mut grads[gain.0], dgain);
                    add_into(&mut grads[bias.0], dbias);
                }
                Op::Gelu(x) => {
                    let dx = g
                        .iter()
                        .zip(self.value(*x))
                        .map(|(g, &v)| g * gelu_deriv(v))
                        .collect();
                    add_into(&mut grads[x.0], dx);
                }
                Op::Sigmoid(x) => {
                    let dx = g
                        .iter()
                        .zip(node.value.iter())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    add_into(&mut grads[x.0], dx);
                }
                Op::Embed { table, ids } => {
                    let d = node.shape[1];
                    let mut dt = vec![0.0; self.value(*table).len()];
                    for (r, &id) in ids.iter().enumerate() {
                        dt[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(t, v)| *t += v);
                    }
                    add_into(&mut grads[table.0], dt);
                }
                Op::Bce { logit, target } => {
                    let p = stable_sigmoid(self.scalar(*logit));
                    add_into(&mut grads[logit.0], vec![g[0] * (p - target)]);
                }
                Op::Sum(x) => {
                    add_into(&mut grads[x.0], vec![g[0]; self.value(*x).len()]);
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len();
                    add_into(&mut grads[x.0], vec![g[0] / n.max(1) as f64; n]);
                }
                Op::SliceCols { x, start } => {
                    let (m, n) = rows_cols(self.shape(*x)).unwrap();
                    let w = node.shape[1];
                    let mut dx = vec![0.0; m * n];
                    for r in 0..m {
                        dx[r * n + start..r * n + start + w]
                            .copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    add_into(&mut grads[x.0], dx);
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = (node.shape[0], node.shape[1]);
                    let mut offset = 0;
                    for p in parts {
                        let w = self.shape(*p)[1];
                        let mut dp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            dp.extend_from_slice(&g[r * n + offset..r * n + offset + w]);
                        }
                        offset += w;
                        add_into(&mut grads[p.0], dp);
                    }
                }
                Op::SliceRows { x, start } => {
                    let n = node.shape[1];
                    let mut dx = vec![0.0; self.value(*x).len()];
                    dx[start * n..start * n + g.len()].copy_from_slice(&g);
                    add_into(&mut grads[x.0], dx);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        add_into(&mut grads[p.0], g[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = t.constant(mat(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(t.shape(c), &[2, 2]);
    }

    #[test]
    fn matmul_row_by_column() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0, 2.0]]));
        let b = t.constant(mat(&[&[3.0], &[4.0]]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(vec![2, 3]));
        let b = t.constant(Tensor::zeros(vec![2, 3]));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
        assert!(matches!(t.matmul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = t.softmax(x, 0).unwrap();
        for v in t.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = t.constant(Tensor::vector(vec![1000.0, 0.0]));
        let y = t.softmax(x, 0).unwrap();
        assert!((t.value(y)[0] - 1.0).abs() < 1e-12);
        assert!(t.value(y)[1] >= 0.0 && t.value(y)[1] < 1e-300);
        assert!(t.value(y).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_one_two_three() {
        // exp(k)/sum exp, summed by hand: e + e^2 + e^3 = 30.19287485...
        let total = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let expected = [1f64.exp() / total, 2f64.exp() / total, 3f64.exp() / total];
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = t.softmax(x, 0).unwrap();
        for (got, want) in t.value(y).iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 1e-4);
        }
        for (got, want) in t.value(y).iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_nan_and_bad_axis() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![f64::NAN, 0.0]));
        assert!(matches!(t.softmax(x, 0), Err(Error::Numeric(_))));
        assert!(matches!(t.softmax(x, 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_along_first_axis_of_matrix() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[0.0, 5.0], &[0.0, 5.0]]));
        let y = t.softmax(x, 0).unwrap();
        assert_eq!(t.value(y), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        let g = t.constant(Tensor::filled(vec![3], 1.0));
        let b = t.constant(Tensor::zeros(vec![3]));
        let x = t.constant(Tensor::vector(vec![5.0, 5.0, 5.0]));
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(t.value(y), &[0.0, 0.0, 0.0]);

        let g = t.constant(Tensor::filled(vec![2], 1.0));
        let b = t.constant(Tensor::zeros(vec![2]));
        let x = t.constant(Tensor::vector(vec![1.0, 3.0]));
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        assert!((t.value(y)[0] + 1.0).abs() < 1e-3);
        assert!((t.value(y)[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sigmoid_and_bce_closed_forms() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(0.0));
        let s = t.sigmoid(z);
        assert_eq!(t.scalar(s), 0.5);
        let l = t.bce_loss(z, 1.0).unwrap();
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(t.bce_loss(z, 0.5).is_err());
    }

    #[test]
    fn bce_large_logits_do_not_overflow() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::scalar(800.0));
        let l = t.bce_loss(z, 0.0).unwrap();
        assert!((t.scalar(l) - 800.0).abs() < 1e-9);
        let l = t.bce_loss(z, 1.0).unwrap();
        assert_eq!(t.scalar(l), 0.0);
    }

    #[test]
    fn embed_returns_table_rows_and_checks_range() {
        let mut t = Tape::new();
        let table = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let e = t.embed(table, &[2, 0]).unwrap();
        assert_eq!(t.value(e), &[5.0, 6.0, 1.0, 2.0]);
        assert!(matches!(
            t.embed(table, &[3]),
            Err(Error::Index {
                index: 3,
                size: 3,
                ..
            })
        ));
        let empty = t.embed(table, &[]).unwrap();
        assert_eq!(t.shape(empty), &[0, 2]);
    }

    #[test]
    fn backward_of_sum_is_all_ones_and_disconnected_is_zero() {
        let mut set = ParamSet::new();
        let p = set.insert("p", Tensor::vector(vec![1.0, -2.0, 3.0]));
        let q = set.insert("q", Tensor::vector(vec![4.0]));
        let grads = {
            let mut t = Tape::with_params(&set);
            let x = t.param(p).unwrap();
            let s = t.sum(x);
            t.backward(s).unwrap()
        };
        set.accumulate(&grads);
        assert_eq!(set.get(p).grad(), Some(&[1.0, 1.0, 1.0][..]));
        assert_eq!(set.get(q).grad(), Some(&[0.0][..]));
        // accumulation without reset
        set.accumulate(&grads);
        assert_eq!(set.get(p).grad(), Some(&[2.0, 2.0, 2.0][..]));
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn param_requires_param_set() {
        let mut t = Tape::new();
        assert!(t.param(ParamId(0)).is_err());
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0], &[2.0]]));
        let b = t.constant(mat(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = t.concat_cols(&[a, b]).unwrap();
        assert_eq!(t.value(c), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = t.slice_cols(c, 1, 2).unwrap();
        assert_eq!(t.value(s), t.value(b));
        let r = t.concat_rows(&[b, b]).unwrap();
        assert_eq!(t.shape(r), &[4, 2]);
        let s = t.slice_rows(r, 2, 2).unwrap();
        assert_eq!(t.value(s), t.value(b));
    }
}
