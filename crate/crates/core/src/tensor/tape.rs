//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the reverse of the node list
//! is a valid topological order for the backward sweep. Values recorded on
//! the tape are never mutated after they are pushed.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{gemm_strided, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BatchNormMode {
    /// Normalize with the statistics of the current batch.
    Train { epsilon: f64 },
    /// Normalize with fixed running statistics.
    Infer { epsilon: f64 },
}

/// Per-column batch statistics observed by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance (divides by `n - 1`).
    pub variance: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias { x: Var, bias: Var },
    Add(Var, Var),
    Relu(Var),
    BatchNorm { x: Var, scale: Var, shift: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch: bool },
    MaxPool { x: Var, argmax: Vec<usize> },
    ConcatBroadcast { local: Var, global: Var },
    GatherMax { x: Var, argmax: Vec<usize> },
    External { input: Var, grad: Tensor },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that needs one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Takes the gradient out, leaving `None`; zeros if the node received none.
    pub fn take_or_zeros(&mut self, var: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape))
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable leaf (a trainable parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = super::matmul_values(self.value(a), self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a length-F vector to every row of an N×F matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (_, f) = xv.require_matrix("add_bias")?;
        let bv = self.value(bias);
        if bv.len() != f {
            return Err(TensorError::Dimension(format!(
                "bias of length {} for {f} columns",
                bv.len()
            )));
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(f) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let shape = xv.shape().to_vec();
        let rg = self.needs(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddBias { x, bias }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(TensorError::Dimension(format!(
                "add of shapes {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let shape = av.shape().to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor { shape: xv.shape().to_vec(), data };
        let rg = self.needs(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    /// Column-wise batch normalization of an N×F matrix.
    ///
    /// In training mode the second return value carries the batch
    /// statistics so the caller can update its running averages. In
    /// inference mode `running` supplies the mean and variance.
    pub fn batchnorm(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        mode: BatchNormMode,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>), TensorError> {
        let xv = self.value(x);
        let (n, f) = xv.require_matrix("batchnorm")?;
        let (sv, tv) = (self.value(scale), self.value(shift));
        if sv.len() != f || tv.len() != f {
            return Err(TensorError::Dimension(format!(
                "batchnorm scale/shift lengths {}/{} for {f} columns",
                sv.len(),
                tv.len()
            )));
        }
        let x_data = xv.data();
        let (mean, var, stats, batch) = match mode {
            BatchNormMode::Train { epsilon } => {
                if n < 2 {
                    return Err(TensorError::BatchTooSmall(n));
                }
                let mut mean = vec![0.0; f];
                for row in x_data.chunks(f) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut sq = vec![0.0; f];
                for row in x_data.chunks(f) {
                    for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                let biased: Vec<f64> = sq.iter().map(|s| s / n as f64).collect();
                let unbiased = sq.iter().map(|s| s / (n - 1) as f64).collect();
                let stats = BatchStats { mean: mean.clone(), variance: unbiased };
                (mean, biased, Some(stats), (true, epsilon))
            }
            BatchNormMode::Infer { epsilon } => {
                let (rm, rv) = running.ok_or_else(|| {
                    TensorError::Evaluation("inference batchnorm needs running statistics".into())
                })?;
                if rm.len() != f || rv.len() != f {
                    return Err(TensorError::Dimension("running statistics width".into()));
                }
                (rm.to_vec(), rv.to_vec(), None, (false, epsilon))
            }
        };
        let (is_batch, eps) = batch;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; n * f];
        let mut out = vec![0.0; n * f];
        for r in 0..n {
            for c in 0..f {
                let h = (x_data[r * f + c] - mean[c]) * inv_std[c];
                xhat[r * f + c] = h;
                out[r * f + c] = h * sv.data()[c] + tv.data()[c];
            }
        }
        let rg = self.needs(&[x, scale, shift]);
        let op = Op::BatchNorm { x, scale, shift, xhat, inv_std, batch: is_batch };
        let var_out = self.push(Tensor::new(vec![n, f], out)?, op, rg);
        Ok((var_out, stats))
    }

    /// Column-wise maximum of an N×F matrix, giving a length-F vector.
    /// Ties route the gradient to the first maximal row.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (n, f) = xv.require_matrix("global_max_pool")?;
        if n == 0 {
            return Err(TensorError::EmptyInput("global_max_pool"));
        }
        let d = xv.data();
        let mut argmax = vec![0usize; f];
        let mut best = d[..f].to_vec();
        for r in 1..n {
            for c in 0..f {
                let v = d[r * f + c];
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![f], best)?, Op::MaxPool { x, argmax }, rg))
    }

    /// Concatenates each row of `local` (N×A) with the vector `global` (B).
    pub fn concat_broadcast(&mut self, local: Var, global: Var) -> Result<Var, TensorError> {
        let lv = self.value(local);
        let (n, a) = lv.require_matrix("concat_broadcast")?;
        let gv = self.value(global);
        let b = gv.len();
        let mut out = Vec::with_capacity(n * (a + b));
        for row in lv.data().chunks(a) {
            out.extend_from_slice(row);
            out.extend_from_slice(gv.data());
        }
        let rg = self.needs(&[local, global]);
        Ok(self.push(Tensor::new(vec![n, a + b], out)?, Op::ConcatBroadcast { local, global }, rg))
    }

    /// Row `i` of the result is the channel-wise maximum over the rows of
    /// `x` listed in `groups[i]`. The group lists are constants.
    pub fn gather_max(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (n, f) = xv.require_matrix("gather_max")?;
        let d = xv.data();
        let mut out = vec![0.0; groups.len() * f];
        let mut argmax = vec![0usize; groups.len() * f];
        for (i, group) in groups.iter().enumerate() {
            let first = *group.first().ok_or(TensorError::EmptyInput("gather_max group"))?;
            for &j in group {
                if j >= n {
                    return Err(TensorError::IndexOutOfRange { index: j, len: n });
                }
            }
            let dst = &mut out[i * f..(i + 1) * f];
            dst.copy_from_slice(&d[first * f..(first + 1) * f]);
            let am = &mut argmax[i * f..(i + 1) * f];
            am.fill(first);
            for &j in &group[1..] {
                let src = &d[j * f..(j + 1) * f];
                for c in 0..f {
                    if src[c] > dst[c] {
                        dst[c] = src[c];
                        am[c] = j;
                    }
                }
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![groups.len(), f], out)?, Op::GatherMax { x, argmax }, rg))
    }

    /// Injects a scalar whose gradient with respect to `input` was computed
    /// outside the tape (the loss functions supply their own analytic
    /// gradients).
    pub fn external_scalar(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var, TensorError> {
        if grad.shape() != self.value(input).shape() {
            return Err(TensorError::Dimension(format!(
                "external gradient shape {:?} for input {:?}",
                grad.shape(),
                self.value(input).shape()
            )));
        }
        let rg = self.needs(&[input]);
        Ok(self.push(Tensor::scalar(value), Op::External { input, grad }, rg))
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var, TensorError> {
        let mut total = 0.0;
        for &(v, w) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(TensorError::Dimension("weighted_sum takes scalars".into()));
            }
            total += w * t.data()[0];
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.needs(&vars);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), rg))
    }

    /// Hash of every discrete branch taken by the recorded forward pass
    /// (ReLU activity masks and max-selection indices). Two evaluations
    /// with equal signatures lie in the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.nodes[x.0].value.data() {
                        (*v > 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } | Op::GatherMax { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients, TensorError> {
        if self.value(root).len() != 1 {
            return Err(TensorError::Dimension("backward needs a scalar root".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.wants(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm_strided(m, n, k, g.data(), (n as isize, 1), bv.data(), (1, n as isize), &mut da, 0.0);
                    self.accumulate(grads, *a, Tensor { shape: vec![m, k], data: da });
                }
                if self.wants(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    gemm_strided(k, m, n, av.data(), (1, k as isize), g.data(), (n as isize, 1), &mut db, 0.0);
                    self.accumulate(grads, *b, Tensor { shape: vec![k, n], data: db });
                }
            }
            Op::AddBias { x, bias } => {
                if self.wants(*bias) {
                    let f = g.cols();
                    let mut db = vec![0.0; f];
                    for row in g.data().chunks(f) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    self.accumulate(grads, *bias, Tensor { shape, data: db });
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data });
            }
            Op::BatchNorm { x, scale, shift, xhat, inv_std, batch } => {
                let (n, f) = (g.rows(), g.cols());
                let gd = g.data();
                let mut sum_g = vec![0.0; f];
                let mut sum_gx = vec![0.0; f];
                for r in 0..n {
                    for c in 0..f {
                        sum_g[c] += gd[r * f + c];
                        sum_gx[c] += gd[r * f + c] * xhat[r * f + c];
                    }
                }
                if self.wants(*scale) {
                    let shape = self.value(*scale).shape().to_vec();
                    self.accumulate(grads, *scale, Tensor { shape, data: sum_gx.clone() });
                }
                if self.wants(*shift) {
                    let shape = self.value(*shift).shape().to_vec();
                    self.accumulate(grads, *shift, Tensor { shape, data: sum_g.clone() });
                }
                if self.wants(*x) {
                    let s = self.value(*scale).data();
                    let mut dx = vec![0.0; n * f];
                    let nf = n as f64;
                    for r in 0..n {
                        for c in 0..f {
                            let i = r * f + c;
                            dx[i] = if *batch {
                                s[c] * inv_std[c] / nf * (nf * gd[i] - sum_g[c] - xhat[i] * sum_gx[c])
                            } else {
                                s[c] * inv_std[c] * gd[i]
                            };
                        }
                    }
                    self.accumulate(grads, *x, Tensor { shape: vec![n, f], data: dx });
                }
            }
            Op::MaxPool { x, argmax } => {
                let xv = self.value(*x);
                let f = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (c, &r) in argmax.iter().enumerate() {
                    dx[r * f + c] += g.data()[c];
                }
                self.accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data: dx });
            }
            Op::ConcatBroadcast { local, global } => {
                let a = self.value(*local).cols();
                let b = self.value(*global).len();
                let n = g.rows();
                if self.wants(*local) {
                    let mut dl = Vec::with_capacity(n * a);
                    for row in g.data().chunks(a + b) {
                        dl.extend_from_slice(&row[..a]);
                    }
                    self.accumulate(grads, *local, Tensor { shape: vec![n, a], data: dl });
                }
                if self.wants(*global) {
                    let mut dg = vec![0.0; b];
                    for row in g.data().chunks(a + b) {
                        for (d, v) in dg.iter_mut().zip(&row[a..]) {
                            *d += v;
                        }
                    }
                    let shape = self.value(*global).shape().to_vec();
                    self.accumulate(grads, *global, Tensor { shape, data: dg });
                }
            }
            Op::GatherMax { x, argmax } => {
                let xv = self.value(*x);
                let f = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (i, &src) in argmax.iter().enumerate() {
                    let c = i % f;
                    dx[src * f + c] += g.data()[i];
                }
                self.accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data: dx });
            }
            Op::External { input, grad } => {
                let s = g.data()[0];
                let data = grad.data().iter().map(|v| v * s).collect();
                self.accumulate(grads, *input, Tensor { shape: grad.shape().to_vec(), data });
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    self.accumulate(grads, v, Tensor::scalar(w * g.data()[0]));
                }
            }
        }
    }
}
