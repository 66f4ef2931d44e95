use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{gemm, AutodiffError, ParamStore, Tensor};
use crate::geom::{rodrigues, rodrigues_jacobian, Vec3};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Every differentiable operation the tape knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Affine,
    AddRow,
    Relu,
    Tanh,
    Clamp,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    Add,
    Sub,
    Mul,
    Scale,
    Softmax,
    WeightedSum,
    L1Mean,
    L2Mean,
    RotatePoints,
}

const ALL_OPS: [OpKind; 18] = [
    OpKind::Affine,
    OpKind::AddRow,
    OpKind::Relu,
    OpKind::Tanh,
    OpKind::Clamp,
    OpKind::ConcatCols,
    OpKind::ConcatRows,
    OpKind::SliceCols,
    OpKind::SliceRows,
    OpKind::Add,
    OpKind::Sub,
    OpKind::Mul,
    OpKind::Scale,
    OpKind::Softmax,
    OpKind::WeightedSum,
    OpKind::L1Mean,
    OpKind::L2Mean,
    OpKind::RotatePoints,
];

/// The operations with forward and backward rules.
pub fn op_set() -> &'static [OpKind] {
    &ALL_OPS
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Affine => "affine",
            OpKind::AddRow => "add_row",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Clamp => "clamp",
            OpKind::ConcatCols => "concat_cols",
            OpKind::ConcatRows => "concat_rows",
            OpKind::SliceCols => "slice_cols",
            OpKind::SliceRows => "slice_rows",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Softmax => "softmax",
            OpKind::WeightedSum => "weighted_sum",
            OpKind::L1Mean => "l1_mean",
            OpKind::L2Mean => "l2_mean",
            OpKind::RotatePoints => "rotate_points",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = AutodiffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_OPS
            .iter()
            .copied()
            .find(|op| op.name() == s)
            .ok_or_else(|| AutodiffError::UnsupportedOp(s.to_string()))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Affine { x: usize, w: usize, b: Option<usize> },
    AddRow { x: usize, row: usize },
    Relu(usize),
    Tanh(usize),
    Clamp { x: usize, lo: f64, hi: f64 },
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    SliceCols { x: usize, start: usize },
    SliceRows { x: usize, start: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Softmax(usize),
    WeightedSum { p: usize, coords: Tensor },
    L1Mean(usize, usize),
    L2Mean(usize, usize),
    Rotate { pts: usize, aa: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run recording of a computation; rebuilt for every step.
///
/// Node ids are handed out in creation order, so the node list is already a
/// topological order and the backward sweep simply walks it in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(usize, usize)>,
    param_nodes: HashMap<usize, usize>,
    no_grad: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that records values only; every node is treated as a constant.
    pub fn no_grad() -> Self {
        Self { no_grad: true, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad: needs_grad && !self.no_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn v(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// An anonymous differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Bind a named parameter from `store`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId, AutodiffError> {
        let idx = store.index_of(name).ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))?;
        if let Some(&node) = self.param_nodes.get(&idx) {
            return Ok(NodeId(node));
        }
        let id = self.push(store.get_index(idx).clone(), Op::Leaf, true);
        self.params.push((idx, id.0));
        self.param_nodes.insert(idx, id.0);
        Ok(id)
    }

    /// A copy of `id` that blocks gradient flow.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.v(id).clone();
        self.constant(v)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, AutodiffError> {
        let (n, k) = self.v(x).dims();
        let (kw, m) = self.v(w).dims();
        if k != kw {
            return Err(shape_err("affine", format!("x is {n}x{k}, w is {kw}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        if let Some(b) = b {
            let bv = self.v(b);
            if bv.dims() != (1, m) {
                return Err(shape_err("affine", format!("bias {:?} for width {m}", bv.shape())));
            }
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(bv.data());
            }
        }
        gemm(n, k, m, 1.0, self.v(x).data(), false, self.v(w).data(), false, 1.0, &mut out);
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(Tensor::matrix(n, m, out), Op::Affine { x: x.0, w: w.0, b: b.map(|b| b.0) }, ng))
    }

    /// Broadcast-add a `1 x m` row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId, AutodiffError> {
        let (n, m) = self.v(x).dims();
        if self.v(row).dims() != (1, m) {
            return Err(shape_err("add_row", format!("row {:?} for width {m}", self.v(row).shape())));
        }
        let r = self.v(row).data();
        let mut out = self.v(x).data().to_vec();
        for chunk in out.chunks_exact_mut(m) {
            for (o, v) in chunk.iter_mut().zip(r) {
                *o += v;
            }
        }
        let ng = self.ng(x) || self.ng(row);
        Ok(self.push(Tensor::matrix(n, m, out), Op::AddRow { x: x.0, row: row.0 }, ng))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.v(x);
        let out = Tensor::matrix(v.rows(), v.cols(), v.data().iter().map(|&a| a.max(0.0)).collect());
        let ng = self.ng(x);
        self.push(out, Op::Relu(x.0), ng)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.v(x);
        let out = Tensor::matrix(v.rows(), v.cols(), v.data().iter().map(|a| a.tanh()).collect());
        let ng = self.ng(x);
        self.push(out, Op::Tanh(x.0), ng)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.v(x);
        let out = Tensor::matrix(v.rows(), v.cols(), v.data().iter().map(|a| a.clamp(lo, hi)).collect());
        let ng = self.ng(x);
        self.push(out, Op::Clamp { x: x.0, lo, hi }, ng)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (na, ca) = self.v(a).dims();
        let (nb, cb) = self.v(b).dims();
        if na != nb {
            return Err(shape_err("concat_cols", format!("{na} rows vs {nb} rows")));
        }
        let (av, bv) = (self.v(a).data(), self.v(b).data());
        let mut out = Vec::with_capacity(na * (ca + cb));
        for r in 0..na {
            out.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(na, ca + cb, out), Op::ConcatCols(a.0, b.0), ng))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (na, ca) = self.v(a).dims();
        let (nb, cb) = self.v(b).dims();
        if ca != cb {
            return Err(shape_err("concat_rows", format!("{ca} cols vs {cb} cols")));
        }
        let mut out = self.v(a).data().to_vec();
        out.extend_from_slice(self.v(b).data());
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(na + nb, ca, out), Op::ConcatRows(a.0, b.0), ng))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let (n, c) = self.v(x).dims();
        if len == 0 || start + len > c {
            return Err(shape_err("slice_cols", format!("[{start}, {}) of {c} cols", start + len)));
        }
        let d = self.v(x).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&d[r * c + start..r * c + start + len]);
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(n, len, out), Op::SliceCols { x: x.0, start }, ng))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        let (n, c) = self.v(x).dims();
        if len == 0 || start + len > n {
            return Err(shape_err("slice_rows", format!("[{start}, {}) of {n} rows", start + len)));
        }
        let out = self.v(x).data()[start * c..(start + len) * c].to_vec();
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(len, c, out), Op::SliceRows { x: x.0, start }, ng))
    }

    fn elementwise(
        &mut self,
        name: &str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool), AutodiffError> {
        let (av, bv) = (self.v(a), self.v(b));
        if av.dims() != bv.dims() {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.dims(), bv.dims())));
        }
        let (r, c) = av.dims();
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((Tensor::matrix(r, c, out), self.ng(a) || self.ng(b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (t, ng) = self.elementwise("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a.0, b.0), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (t, ng) = self.elementwise("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a.0, b.0), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (t, ng) = self.elementwise("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a.0, b.0), ng))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.v(x);
        let out = Tensor::matrix(v.rows(), v.cols(), v.data().iter().map(|a| a * c).collect());
        let ng = self.ng(x);
        self.push(out, Op::Scale(x.0, c), ng)
    }

    /// Softmax over every element of `x` (a flattened grid).
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = self.v(x);
        let max = v.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = v.data().iter().map(|a| (a - max).exp()).collect();
        let total: f64 = out.iter().sum();
        for o in &mut out {
            *o /= total;
        }
        let t = Tensor::matrix(v.rows(), v.cols(), out);
        let ng = self.ng(x);
        self.push(t, Op::Softmax(x.0), ng)
    }

    /// `p (1 x K)` times a constant coordinate table `coords (K x d)`.
    pub fn weighted_sum(&mut self, p: NodeId, coords: &Tensor) -> Result<NodeId, AutodiffError> {
        let k = self.v(p).len();
        let (kc, d) = coords.dims();
        if k != kc {
            return Err(shape_err("weighted_sum", format!("{k} weights vs {kc} coordinates")));
        }
        let mut out = vec![0.0; d];
        gemm(1, k, d, 1.0, self.v(p).data(), false, coords.data(), false, 0.0, &mut out);
        let ng = self.ng(p);
        Ok(self.push(Tensor::matrix(1, d, out), Op::WeightedSum { p: p.0, coords: coords.clone() }, ng))
    }

    pub fn l1_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (d, ng) = self.elementwise("l1_mean", a, b, |x, y| (x - y).abs())?;
        let v = d.data().iter().sum::<f64>() / d.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::L1Mean(a.0, b.0), ng))
    }

    pub fn l2_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (d, ng) = self.elementwise("l2_mean", a, b, |x, y| (x - y) * (x - y))?;
        let v = d.data().iter().sum::<f64>() / d.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::L2Mean(a.0, b.0), ng))
    }

    /// Rotate each row of `pts (n x 3)` by the axis-angle `aa (1 x 3)`.
    pub fn rotate_points(&mut self, pts: NodeId, aa: NodeId) -> Result<NodeId, AutodiffError> {
        let (n, c) = self.v(pts).dims();
        if c != 3 || self.v(aa).len() != 3 {
            return Err(shape_err("rotate_points", format!("points {n}x{c}, axis-angle {:?}", self.v(aa).shape())));
        }
        let a = self.v(aa).data();
        let r = rodrigues(&Vec3::new(a[0], a[1], a[2]));
        let p = self.v(pts).data();
        let mut out = vec![0.0; n * 3];
        for i in 0..n {
            let q = r * Vec3::new(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
            out[3 * i..3 * i + 3].copy_from_slice(q.as_slice());
        }
        let ng = self.ng(pts) || self.ng(aa);
        Ok(self.push(Tensor::matrix(n, 3, out), Op::Rotate { pts: pts.0, aa: aa.0 }, ng))
    }

    /// Reverse sweep from a scalar `loss`. Gradients are kept for leaves.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, AutodiffError> {
        let lv = self.v(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        Ok(Gradients { grads, params: self.params.clone() })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], idx: usize) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[idx].needs_grad {
            return None;
        }
        let len = self.nodes[idx].value.len();
        Some(grads[idx].get_or_insert_with(|| vec![0.0; len]))
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], idx: usize, f: impl Fn(usize) -> f64) {
        if let Some(buf) = self.slot(grads, idx) {
            for (j, b) in buf.iter_mut().enumerate() {
                *b += f(j);
            }
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (n, k) = self.nodes[x].value.dims();
                let m = self.nodes[w].value.cols();
                if let Some(buf) = self.slot(grads, x) {
                    gemm(n, m, k, 1.0, g, false, self.nodes[w].value.data(), true, 1.0, buf);
                }
                if let Some(buf) = self.slot(grads, w) {
                    gemm(k, n, m, 1.0, self.nodes[x].value.data(), true, g, false, 1.0, buf);
                }
                if let Some(b) = b {
                    if let Some(buf) = self.slot(grads, b) {
                        col_sum_into(g, m, buf);
                    }
                }
            }
            Op::AddRow { x, row } => {
                let m = out.cols();
                self.accumulate(grads, x, |j| g[j]);
                if let Some(buf) = self.slot(grads, row) {
                    col_sum_into(g, m, buf);
                }
            }
            Op::Relu(x) => {
                let y = out.data();
                self.accumulate(grads, x, |j| if y[j] > 0.0 { g[j] } else { 0.0 });
            }
            Op::Tanh(x) => {
                let y = out.data();
                self.accumulate(grads, x, |j| g[j] * (1.0 - y[j] * y[j]));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.nodes[x].value.data();
                self.accumulate(grads, x, |j| if xv[j] > lo && xv[j] < hi { g[j] } else { 0.0 });
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[a].value.cols();
                let cb = self.nodes[b].value.cols();
                let c = ca + cb;
                self.accumulate(grads, a, |j| g[(j / ca) * c + j % ca]);
                self.accumulate(grads, b, |j| g[(j / cb) * c + ca + j % cb]);
            }
            Op::ConcatRows(a, b) => {
                let la = self.nodes[a].value.len();
                self.accumulate(grads, a, |j| g[j]);
                self.accumulate(grads, b, |j| g[la + j]);
            }
            Op::SliceCols { x, start } => {
                let c = self.nodes[x].value.cols();
                let len = out.cols();
                if let Some(buf) = self.slot(grads, x) {
                    for (r, row) in g.chunks_exact(len).enumerate() {
                        for (o, v) in buf[r * c + start..r * c + start + len].iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = out.cols();
                if let Some(buf) = self.slot(grads, x) {
                    for (o, v) in buf[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *o += v;
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, |j| g[j]);
                self.accumulate(grads, b, |j| g[j]);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |j| g[j]);
                self.accumulate(grads, b, |j| -g[j]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                self.accumulate(grads, a, |j| g[j] * bv[j]);
                self.accumulate(grads, b, |j| g[j] * av[j]);
            }
            Op::Scale(x, c) => self.accumulate(grads, x, |j| c * g[j]),
            Op::Softmax(x) => {
                let y = out.data();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                self.accumulate(grads, x, |j| y[j] * (g[j] - dot));
            }
            Op::WeightedSum { p, ref coords } => {
                let (k, d) = coords.dims();
                if let Some(buf) = self.slot(grads, p) {
                    gemm(1, d, k, 1.0, g, false, coords.data(), true, 1.0, buf);
                }
            }
            Op::L1Mean(a, b) => {
                let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                let s = g[0] / av.len() as f64;
                let sign = |j: usize| {
                    let d = av[j] - bv[j];
                    if d > 0.0 {
                        s
                    } else if d < 0.0 {
                        -s
                    } else {
                        0.0
                    }
                };
                self.accumulate(grads, a, sign);
                self.accumulate(grads, b, |j| -sign(j));
            }
            Op::L2Mean(a, b) => {
                let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                let s = 2.0 * g[0] / av.len() as f64;
                self.accumulate(grads, a, |j| s * (av[j] - bv[j]));
                self.accumulate(grads, b, |j| -s * (av[j] - bv[j]));
            }
            Op::Rotate { pts, aa } => {
                let a = self.nodes[aa].value.data();
                let aa_v = Vec3::new(a[0], a[1], a[2]);
                let r = rodrigues(&aa_v);
                let p = self.nodes[pts].value.data();
                let n = p.len() / 3;
                if let Some(buf) = self.slot(grads, pts) {
                    let rt = r.transpose();
                    for i in 0..n {
                        let d = rt * Vec3::new(g[3 * i], g[3 * i + 1], g[3 * i + 2]);
                        for c in 0..3 {
                            buf[3 * i + c] += d[c];
                        }
                    }
                }
                if self.nodes[aa].needs_grad {
                    // G = sum_i g_i p_i^T, then dL/daa_k = <dR/daa_k, G>
                    let mut gm = [[0.0; 3]; 3];
                    for i in 0..n {
                        for (r_, row) in gm.iter_mut().enumerate() {
                            for (c, v) in row.iter_mut().enumerate() {
                                *v += g[3 * i + r_] * p[3 * i + c];
                            }
                        }
                    }
                    let jac = rodrigues_jacobian(&aa_v);
                    let d: Vec<f64> = jac
                        .iter()
                        .map(|jk| (0..3).flat_map(|r_| (0..3).map(move |c| (r_, c))).map(|(r_, c)| jk[(r_, c)] * gm[r_][c]).sum())
                        .collect();
                    self.accumulate(grads, aa, |j| d[j]);
                }
            }
        }
    }
}

fn col_sum_into(g: &[f64], m: usize, buf: &mut [f64]) {
    for row in g.chunks_exact(m) {
        for (o, v) in buf.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn shape_err(op: &str, detail: String) -> AutodiffError {
    AutodiffError::Shape(format!("{op}: {detail}"))
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of a leaf node, shaped like its value. `None` if the loss does
    /// not depend on it.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Option<Tensor> {
        let g = self.grads.get(id.0)?.as_ref()?;
        let shape = tape.value(id).shape().to_vec();
        Tensor::new(shape, g.clone()).ok()
    }

    /// Gradients aligned with the parameter order of `store`; parameters the
    /// loss does not reach get zeros.
    pub fn for_store(mut self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; store.len()];
        for &(pidx, node) in &self.params {
            if let Some(g) = self.grads.get_mut(node) {
                out[pidx] = g.take();
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, g)| {
                let p = store.get_index(i);
                let data = g.unwrap_or_else(|| vec![0.0; p.len()]);
                Tensor::new(p.shape().to_vec(), data).expect("gradient shaped like its parameter")
            })
            .collect()
    }
}
