//! Recording tape for reverse-mode differentiation over dense arrays.
//!
//! A `Tape` owns every intermediate value of one forward pass. Operations
//! append nodes; `backward` walks the records in reverse and accumulates
//! vector-Jacobian products. Nodes built from constants are marked as not
//! requiring gradients and the corresponding backward work is skipped.

use std::sync::Arc;

use crate::array::DenseArray;
use crate::error::{NdiffError, Result};
use crate::kernels;
use crate::real::Real;

/// Index of a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise multiply by a scalar node (shape `[1]`).
    MulScalar(NodeId, NodeId),
    /// `scale * x + offset`, elementwise with constant coefficients; only
    /// the scale matters to the backward pass.
    Affine { input: NodeId, scale: f64 },
    Sin(NodeId),
    Cos(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Abs(NodeId),
    Matmul(NodeId, NodeId),
    /// `a · bᵀ` with `b` stored `[m,k]`; used by explicit input-gradient
    /// expressions where weight transposes would otherwise be materialized.
    MatmulBt(NodeId, NodeId),
    /// `[n,m] + [m]` row-broadcast bias add.
    AddRow(NodeId, NodeId),
    /// `[m]` replicated to `[n,m]`.
    BroadcastRow { input: NodeId, rows: usize },
    /// Mean over rows: `[n,m] -> [m]`.
    MeanRows(NodeId),
    /// Sum along each row: `[n,m] -> [n,1]`.
    RowSum(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols {
        input: NodeId,
        start: usize,
        len: usize,
    },
    SliceRows {
        input: NodeId,
        start: usize,
        len: usize,
    },
    Reshape(NodeId),
    /// Mean binary cross-entropy of probabilities against constant labels,
    /// with probabilities clamped to `[eps, 1-eps]`.
    BceMean {
        probs: NodeId,
        labels: NodeId,
        eps: f64,
    },
}

struct Node<T> {
    value: Arc<DenseArray<T>>,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients<T> {
    grads: Vec<Option<DenseArray<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss w.r.t. the given node, if any was accumulated.
    pub fn get(&self, id: NodeId) -> Option<&DenseArray<T>> {
        self.grads.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Moves the gradient out, leaving `None`.
    pub fn take(&mut self, id: NodeId) -> Option<DenseArray<T>> {
        self.grads.get_mut(id.index()).and_then(|g| g.take())
    }
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Arc<DenseArray<T>> {
        &self.nodes[id.index()].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.index()].value.shape()
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.index()].needs_grad
    }

    fn push(&mut self, value: DenseArray<T>, op: Op, needs_grad: bool) -> NodeId {
        self.push_shared(Arc::new(value), op, needs_grad)
    }

    fn push_shared(&mut self, value: Arc<DenseArray<T>>, op: Op, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        id
    }

    /// Leaf that participates in differentiation (a parameter or input).
    pub fn param(&mut self, value: Arc<DenseArray<T>>) -> NodeId {
        self.push_shared(value, Op::Leaf, true)
    }

    pub fn param_owned(&mut self, value: DenseArray<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant: no gradient is ever accumulated for it,
    /// and backward work feeding only constants is skipped.
    pub fn constant(&mut self, value: Arc<DenseArray<T>>) -> NodeId {
        self.push_shared(value, Op::Leaf, false)
    }

    pub fn constant_owned(&mut self, value: DenseArray<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    fn check_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(NdiffError::Shape {
                op,
                detail: format!("{:?} vs {:?}", sa, sb),
            });
        }
        Ok(())
    }

    fn binary_needs(&self, a: NodeId, b: NodeId) -> bool {
        self.needs_grad(a) || self.needs_grad(b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("add", a, b)?;
        let mut out = (**self.value(a)).clone();
        let bv = self.value(b).clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += x;
        }
        Ok(self.push(out, Op::Add(a, b), self.binary_needs(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("sub", a, b)?;
        let mut out = (**self.value(a)).clone();
        let bv = self.value(b).clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o -= x;
        }
        Ok(self.push(out, Op::Sub(a, b), self.binary_needs(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("mul", a, b)?;
        let mut out = (**self.value(a)).clone();
        let bv = self.value(b).clone();
        for (o, &x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= x;
        }
        Ok(self.push(out, Op::Mul(a, b), self.binary_needs(a, b)))
    }

    /// Elementwise multiply of an array by a scalar node.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.value(s).is_scalar() {
            return Err(NdiffError::Shape {
                op: "mul_scalar",
                detail: format!("scalar operand has shape {:?}", self.shape(s)),
            });
        }
        let sv = self.value(s).scalar_value();
        let mut out = (**self.value(a)).clone();
        for o in out.data_mut() {
            *o *= sv;
        }
        Ok(self.push(out, Op::MulScalar(a, s), self.binary_needs(a, s)))
    }

    /// `scale * x + offset` elementwise with constant coefficients.
    pub fn affine(&mut self, input: NodeId, scale: f64, offset: f64) -> NodeId {
        let (ks, kb) = (T::from_f64(scale), T::from_f64(offset));
        let src = self.value(input).clone();
        let mut out = DenseArray::zeros(src.shape().to_vec());
        kernels::map(src.data(), out.data_mut(), |x| ks * x + kb);
        let needs = self.needs_grad(input);
        self.push(out, Op::Affine { input, scale }, needs)
    }

    pub fn neg(&mut self, input: NodeId) -> NodeId {
        self.affine(input, -1.0, 0.0)
    }

    fn unary(&mut self, input: NodeId, op: Op, f: impl Fn(T) -> T + Sync) -> NodeId {
        let src = self.value(input).clone();
        let mut out = DenseArray::zeros(src.shape().to_vec());
        kernels::map(src.data(), out.data_mut(), f);
        let needs = self.needs_grad(input);
        self.push(out, op, needs)
    }

    pub fn sin(&mut self, input: NodeId) -> NodeId {
        self.unary(input, Op::Sin(input), |x| x.sin())
    }

    pub fn cos(&mut self, input: NodeId) -> NodeId {
        self.unary(input, Op::Cos(input), |x| x.cos())
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        self.unary(input, Op::Relu(input), |x| x.max(T::ZERO))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        self.unary(input, Op::Sigmoid(input), |x| {
            T::ONE / (T::ONE + (-x).exp())
        })
    }

    /// Elementwise absolute value; the subgradient at exactly zero is zero.
    pub fn abs(&mut self, input: NodeId) -> NodeId {
        self.unary(input, Op::Abs(input), |x| x.abs())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let (n, k) = (av.rows(), av.cols());
        let (kb, m) = (bv.rows(), bv.cols());
        if k != kb {
            return Err(NdiffError::Shape {
                op: "matmul",
                detail: format!("{:?} · {:?}", av.shape(), bv.shape()),
            });
        }
        let mut out = DenseArray::zeros(vec![n, m]);
        kernels::matmul(av.data(), bv.data(), out.data_mut(), n, k, m);
        Ok(self.push(out, Op::Matmul(a, b), self.binary_needs(a, b)))
    }

    /// `a · bᵀ` where `a` is `[n,k]` and `b` is `[m,k]`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).clone(), self.value(b).clone());
        let (n, k) = (av.rows(), av.cols());
        let (m, kb) = (bv.rows(), bv.cols());
        if k != kb {
            return Err(NdiffError::Shape {
                op: "matmul_bt",
                detail: format!("{:?} · {:?}ᵀ", av.shape(), bv.shape()),
            });
        }
        let mut out = DenseArray::zeros(vec![n, m]);
        kernels::matmul_bt_acc(av.data(), bv.data(), out.data_mut(), n, k, m);
        Ok(self.push(out, Op::MatmulBt(a, b), self.binary_needs(a, b)))
    }

    /// `[n,m] + [m]`: adds a bias row to every row of a matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a).clone(), self.value(bias).clone());
        let m = av.cols();
        if bv.len() != m {
            return Err(NdiffError::Shape {
                op: "add_row",
                detail: format!("matrix {:?} with bias {:?}", av.shape(), bv.shape()),
            });
        }
        let mut out = (*av).clone();
        let n = av.rows();
        for i in 0..n {
            let row = &mut out.data_mut()[i * m..(i + 1) * m];
            for (o, &x) in row.iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias), self.binary_needs(a, bias)))
    }

    /// Replicates a `[m]` (or `[1,m]`) row to `[rows, m]`.
    pub fn broadcast_row(&mut self, input: NodeId, rows: usize) -> Result<NodeId> {
        let v = self.value(input).clone();
        if v.rows() != 1 {
            return Err(NdiffError::Shape {
                op: "broadcast_row",
                detail: format!("expected a single row, got {:?}", v.shape()),
            });
        }
        let m = v.cols();
        let mut data = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            data.extend_from_slice(v.data());
        }
        let out = DenseArray::new(vec![rows, m], data)?;
        let needs = self.needs_grad(input);
        Ok(self.push(out, Op::BroadcastRow { input, rows }, needs))
    }

    /// Mean over rows: `[n,m] -> [m]`, accumulated in f64.
    pub fn mean_rows(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).clone();
        let (n, m) = (v.rows(), v.cols());
        let mut acc = vec![0.0f64; m];
        for i in 0..n {
            for (a, &x) in acc.iter_mut().zip(v.row(i)) {
                *a += x.to_f64();
            }
        }
        let data: Vec<T> = acc
            .into_iter()
            .map(|a| T::from_f64(a / n as f64))
            .collect();
        let needs = self.needs_grad(input);
        self.push(DenseArray::from_vec(data), Op::MeanRows(input), needs)
    }

    /// Sum along each row: `[n,m] -> [n,1]`.
    pub fn row_sum(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).clone();
        let (n, m) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = 0.0f64;
            for &x in &v.data()[i * m..(i + 1) * m] {
                acc += x.to_f64();
            }
            data.push(T::from_f64(acc));
        }
        let needs = self.needs_grad(input);
        let out = DenseArray::new(vec![n, 1], data).expect("row_sum shape");
        self.push(out, Op::RowSum(input), needs)
    }

    pub fn sum_all(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).clone();
        let s = T::from_f64(v.sum_f64());
        let needs = self.needs_grad(input);
        self.push(DenseArray::scalar(s), Op::SumAll(input), needs)
    }

    pub fn mean_all(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).clone();
        let s = T::from_f64(v.sum_f64() / v.len() as f64);
        let needs = self.needs_grad(input);
        self.push(DenseArray::scalar(s), Op::MeanAll(input), needs)
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(NdiffError::Contract {
                op: "concat_cols",
                detail: "no inputs".into(),
            });
        }
        let vals: Vec<Arc<DenseArray<T>>> = inputs.iter().map(|&i| self.value(i).clone()).collect();
        let n = vals[0].rows();
        for v in &vals {
            if v.rows() != n {
                return Err(NdiffError::Shape {
                    op: "concat_cols",
                    detail: format!("row counts differ: {} vs {}", n, v.rows()),
                });
            }
        }
        let m_total: usize = vals.iter().map(|v| v.cols()).sum();
        let mut data = Vec::with_capacity(n * m_total);
        for i in 0..n {
            for v in &vals {
                data.extend_from_slice(v.row(i));
            }
        }
        let needs = inputs.iter().any(|&i| self.needs_grad(i));
        let out = DenseArray::new(vec![n, m_total], data)?;
        Ok(self.push(out, Op::ConcatCols(inputs.to_vec()), needs))
    }

    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(input).clone();
        let (n, m) = (v.rows(), v.cols());
        if start + len > m {
            return Err(NdiffError::Shape {
                op: "slice_cols",
                detail: format!("range {}..{} out of {} columns", start, start + len, m),
            });
        }
        let mut data = Vec::with_capacity(n * len);
        for i in 0..n {
            data.extend_from_slice(&v.row(i)[start..start + len]);
        }
        let needs = self.needs_grad(input);
        let out = DenseArray::new(vec![n, len], data)?;
        Ok(self.push(out, Op::SliceCols { input, start, len }, needs))
    }

    pub fn slice_rows(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(input).clone();
        let (n, m) = (v.rows(), v.cols());
        if start + len > n {
            return Err(NdiffError::Shape {
                op: "slice_rows",
                detail: format!("range {}..{} out of {} rows", start, start + len, n),
            });
        }
        let data = v.data()[start * m..(start + len) * m].to_vec();
        let needs = self.needs_grad(input);
        let out = DenseArray::new(vec![len, m], data)?;
        Ok(self.push(out, Op::SliceRows { input, start, len }, needs))
    }

    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let v = self.value(input).clone();
        let out = v.reshaped(shape)?;
        let needs = self.needs_grad(input);
        Ok(self.push(out, Op::Reshape(input), needs))
    }

    /// Mean binary cross-entropy between predicted probabilities and labels
    /// in `{0,1}`; probabilities are clamped to `[eps, 1-eps]`.
    pub fn bce_mean(&mut self, probs: NodeId, labels: NodeId, eps: f64) -> Result<NodeId> {
        self.check_same_shape("bce_mean", probs, labels)?;
        let (pv, yv) = (self.value(probs).clone(), self.value(labels).clone());
        let e = eps;
        let mut acc = 0.0f64;
        for (&p, &y) in pv.data().iter().zip(yv.data()) {
            let p = p.to_f64().clamp(e, 1.0 - e);
            let y = y.to_f64();
            acc += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        let out = DenseArray::scalar(T::from_f64(acc / pv.len() as f64));
        let needs = self.needs_grad(probs);
        Ok(self.push(out, Op::BceMean { probs, labels, eps }, needs))
    }

    /// Reverse pass from a scalar root. Returns gradients for every node
    /// reachable backward from the root that requires gradients.
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients<T>> {
        if !self.value(root).is_scalar() {
            return Err(NdiffError::Contract {
                op: "backward",
                detail: format!("root must be scalar, got shape {:?}", self.shape(root)),
            });
        }
        let mut grads: Vec<Option<DenseArray<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.index()] = Some(DenseArray::scalar(T::ONE));

        for i in (0..=root.index()).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let go = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_vjp(i, &go, &mut grads);
            grads[i] = Some(go);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<DenseArray<T>>], id: NodeId, contribution: DenseArray<T>) {
        match &mut grads[id.index()] {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(contribution.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Gets (or lazily allocates) the gradient buffer for accumulation.
    fn grad_buf<'a>(
        &self,
        grads: &'a mut [Option<DenseArray<T>>],
        id: NodeId,
    ) -> &'a mut DenseArray<T> {
        let slot = &mut grads[id.index()];
        if slot.is_none() {
            *slot = Some(DenseArray::zeros(self.shape(id).to_vec()));
        }
        slot.as_mut().unwrap()
    }

    fn apply_vjp(&self, i: usize, go: &DenseArray<T>, grads: &mut [Option<DenseArray<T>>]) {
        let needs = |id: NodeId| self.needs_grad(id);
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needs(*a) {
                    Self::accumulate(grads, *a, go.clone());
                }
                if needs(*b) {
                    Self::accumulate(grads, *b, go.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    Self::accumulate(grads, *a, go.clone());
                }
                if needs(*b) {
                    let mut g = go.clone();
                    for v in g.data_mut() {
                        *v = -*v;
                    }
                    Self::accumulate(grads, *b, g);
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let bv = self.value(*b).clone();
                    let buf = self.grad_buf(grads, *a);
                    kernels::zip_acc(go.data(), bv.data(), buf.data_mut(), |g, x| g * x);
                }
                if needs(*b) {
                    let av = self.value(*a).clone();
                    let buf = self.grad_buf(grads, *b);
                    kernels::zip_acc(go.data(), av.data(), buf.data_mut(), |g, x| g * x);
                }
            }
            Op::MulScalar(a, s) => {
                let sv = self.value(*s).scalar_value();
                if needs(*a) {
                    let buf = self.grad_buf(grads, *a);
                    for (g, &x) in buf.data_mut().iter_mut().zip(go.data()) {
                        *g += sv * x;
                    }
                }
                if needs(*s) {
                    let av = self.value(*a).clone();
                    let mut acc = 0.0f64;
                    for (&g, &x) in go.data().iter().zip(av.data()) {
                        acc += g.to_f64() * x.to_f64();
                    }
                    Self::accumulate(grads, *s, DenseArray::scalar(T::from_f64(acc)));
                }
            }
            Op::Affine { input, scale } => {
                if needs(*input) {
                    let k = T::from_f64(*scale);
                    let buf = self.grad_buf(grads, *input);
                    for (g, &x) in buf.data_mut().iter_mut().zip(go.data()) {
                        *g += k * x;
                    }
                }
            }
            Op::Sin(input) => {
                if needs(*input) {
                    let xv = self.value(*input).clone();
                    let buf = self.grad_buf(grads, *input);
                    kernels::zip_acc(go.data(), xv.data(), buf.data_mut(), |g, x| g * x.cos());
                }
            }
            Op::Cos(input) => {
                if needs(*input) {
                    let xv = self.value(*input).clone();
                    let buf = self.grad_buf(grads, *input);
                    kernels::zip_acc(go.data(), xv.data(), buf.data_mut(), |g, x| -(g * x.sin()));
                }
            }
            Op::Relu(input) => {
                if needs(*input) {
                    let xv = self.value(*input).clone();
                    let buf = self.grad_buf(grads, *input);
                    kernels::zip_acc(go.data(), xv.data(), buf.data_mut(), |g, x| {
                        if x > T::ZERO {
                            g
                        } else {
                            T::ZERO
                        }
                    });
                }
            }
            Op::Sigmoid(input) => {
                if needs(*input) {
                    let yv = self.nodes[i].value.clone();
                    let buf = self.grad_buf(grads, *input);
                    kernels::zip_acc(go.data(), yv.data(), buf.data_mut(), |g, y| {
                        g * y * (T::ONE - y)
                    });
                }
            }
            Op::Abs(input) => {
                if needs(*input) {
                    let xv = self.value(*input).clone();
                    let buf = self.grad_buf(grads, *input);
                    kernels::zip_acc(go.data(), xv.data(), buf.data_mut(), |g, x| {
                        if x > T::ZERO {
                            g
                        } else if x < T::ZERO {
                            -g
                        } else {
                            T::ZERO
                        }
                    });
                }
            }
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a).clone(), self.value(*b).clone());
                let (n, k) = (av.rows(), av.cols());
                let m = bv.cols();
                if needs(*a) {
                    // dA += go · Bᵀ
                    let buf = self.grad_buf(grads, *a);
                    kernels::matmul_bt_acc(go.data(), bv.data(), buf.data_mut(), n, m, k);
                }
                if needs(*b) {
                    // dB += Aᵀ · go
                    let buf = self.grad_buf(grads, *b);
                    kernels::matmul_ta_acc(av.data(), go.data(), buf.data_mut(), n, k, m);
                }
            }
            Op::MatmulBt(a, b) => {
                // c = a · bᵀ with a [n,k], b [m,k], go [n,m]
                let (av, bv) = (self.value(*a).clone(), self.value(*b).clone());
                let (n, k) = (av.rows(), av.cols());
                let m = bv.rows();
                if needs(*a) {
                    // dA += go · b
                    let buf = self.grad_buf(grads, *a);
                    kernels::matmul_acc(go.data(), bv.data(), buf.data_mut(), n, m, k);
                }
                if needs(*b) {
                    // dB += goᵀ · a
                    let buf = self.grad_buf(grads, *b);
                    kernels::matmul_ta_acc(go.data(), av.data(), buf.data_mut(), n, m, k);
                }
            }
            Op::AddRow(a, bias) => {
                if needs(*a) {
                    Self::accumulate(grads, *a, go.clone());
                }
                if needs(*bias) {
                    let n = go.rows();
                    let buf = self.grad_buf(grads, *bias);
                    for i2 in 0..n {
                        for (g, &x) in buf.data_mut().iter_mut().zip(go.row(i2)) {
                            *g += x;
                        }
                    }
                }
            }
            Op::BroadcastRow { input, rows } => {
                if needs(*input) {
                    let buf = self.grad_buf(grads, *input);
                    for i2 in 0..*rows {
                        for (g, &x) in buf.data_mut().iter_mut().zip(go.row(i2)) {
                            *g += x;
                        }
                    }
                }
            }
            Op::MeanRows(input) => {
                if needs(*input) {
                    let v = self.value(*input).clone();
                    let (n, m) = (v.rows(), v.cols());
                    let inv = T::from_f64(1.0 / n as f64);
                    let buf = self.grad_buf(grads, *input);
                    for i2 in 0..n {
                        let row = &mut buf.data_mut()[i2 * m..(i2 + 1) * m];
                        for (g, &x) in row.iter_mut().zip(go.data()) {
                            *g += inv * x;
                        }
                    }
                }
            }
            Op::RowSum(input) => {
                if needs(*input) {
                    let v = self.value(*input).clone();
                    let (n, m) = (v.rows(), v.cols());
                    let buf = self.grad_buf(grads, *input);
                    for i2 in 0..n {
                        let g = go.data()[i2];
                        let row = &mut buf.data_mut()[i2 * m..(i2 + 1) * m];
                        for o in row {
                            *o += g;
                        }
                    }
                }
            }
            Op::SumAll(input) => {
                if needs(*input) {
                    let g = go.scalar_value();
                    let buf = self.grad_buf(grads, *input);
                    for o in buf.data_mut() {
                        *o += g;
                    }
                }
            }
            Op::MeanAll(input) => {
                if needs(*input) {
                    let len = self.value(*input).len();
                    let g = T::from_f64(go.scalar_value().to_f64() / len as f64);
                    let buf = self.grad_buf(grads, *input);
                    for o in buf.data_mut() {
                        *o += g;
                    }
                }
            }
            Op::ConcatCols(inputs) => {
                let n = go.rows();
                let mut start = 0usize;
                for &inp in inputs {
                    let mi = self.value(inp).cols();
                    if needs(inp) {
                        let m_total = go.cols();
                        let buf = self.grad_buf(grads, inp);
                        for i2 in 0..n {
                            let src = &go.data()[i2 * m_total + start..i2 * m_total + start + mi];
                            let dst = &mut buf.data_mut()[i2 * mi..(i2 + 1) * mi];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    start += mi;
                }
            }
            Op::SliceCols { input, start, len } => {
                if needs(*input) {
                    let v = self.value(*input).clone();
                    let (n, m) = (v.rows(), v.cols());
                    let buf = self.grad_buf(grads, *input);
                    for i2 in 0..n {
                        let dst = &mut buf.data_mut()[i2 * m + start..i2 * m + start + len];
                        for (d, &s) in dst.iter_mut().zip(go.row(i2)) {
                            *d += s;
                        }
                    }
                }
            }
            Op::SliceRows { input, start, len } => {
                if needs(*input) {
                    let v = self.value(*input).clone();
                    let m = v.cols();
                    let buf = self.grad_buf(grads, *input);
                    let dst = &mut buf.data_mut()[start * m..(start + len) * m];
                    for (d, &s) in dst.iter_mut().zip(go.data()) {
                        *d += s;
                    }
                }
            }
            Op::Reshape(input) => {
                if needs(*input) {
                    let shape = self.shape(*input).to_vec();
                    let g = DenseArray::new(shape, go.data().to_vec()).expect("reshape grad");
                    Self::accumulate(grads, *input, g);
                }
            }
            Op::BceMean { probs, labels, eps } => {
                if needs(*probs) {
                    let (pv, yv) = (self.value(*probs).clone(), self.value(*labels).clone());
                    let n = pv.len() as f64;
                    let g0 = go.scalar_value().to_f64();
                    let e = *eps;
                    let buf = self.grad_buf(grads, *probs);
                    for ((o, &p), &y) in buf.data_mut().iter_mut().zip(pv.data()).zip(yv.data()) {
                        let pf = p.to_f64();
                        // Clamped region contributes zero gradient.
                        if pf > e && pf < 1.0 - e {
                            let yf = y.to_f64();
                            *o += T::from_f64(g0 * (pf - yf) / (pf * (1.0 - pf)) / n);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_tape(x: f64) -> (Tape<f64>, NodeId) {
        let mut t = Tape::new();
        let id = t.param_owned(DenseArray::scalar(x));
        (t, id)
    }

    #[test]
    fn square_gradient() {
        // loss = x^2 at x = 3 -> d/dx = 6
        let (mut t, x) = scalar_tape(3.0);
        let y = t.mul(x, x).unwrap();
        let grads = t.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().scalar_value(), 6.0);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::<f64>::new();
        let v = t.param_owned(DenseArray::from_vec(vec![1.0, 2.0]));
        assert!(t.backward(v).is_err());
    }

    #[test]
    fn sin_product_matches_finite_differences() {
        // loss = sin(w * x): check dL/dw and dL/dx against central differences.
        let h = 1e-6;
        let f = |w: f64, x: f64| (w * x).sin();
        let (w0, x0) = (0.7, 1.3);

        let mut t = Tape::<f64>::new();
        let w = t.param_owned(DenseArray::scalar(w0));
        let x = t.param_owned(DenseArray::scalar(x0));
        let wx = t.mul(w, x).unwrap();
        let y = t.sin(wx);
        let grads = t.backward(y).unwrap();

        let dw = grads.get(w).unwrap().scalar_value();
        let dx = grads.get(x).unwrap().scalar_value();
        let fd_w = (f(w0 + h, x0) - f(w0 - h, x0)) / (2.0 * h);
        let fd_x = (f(w0, x0 + h) - f(w0, x0 - h)) / (2.0 * h);
        assert!((dw - fd_w).abs() / fd_w.abs() < 1e-8);
        assert!((dx - fd_x).abs() / fd_x.abs() < 1e-8);
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let a0: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
        let b0: Vec<f64> = (0..12).map(|i| -0.2 + 0.07 * i as f64).collect();
        let run = |a: &[f64], b: &[f64]| -> f64 {
            let mut t = Tape::<f64>::new();
            let an = t.param_owned(DenseArray::from_rows(2, 3, a.to_vec()).unwrap());
            let bn = t.param_owned(DenseArray::from_rows(3, 4, b.to_vec()).unwrap());
            let c = t.matmul(an, bn).unwrap();
            let s = t.sin(c);
            let l = t.mean_all(s);
            t.value(l).scalar_value()
        };

        let mut t = Tape::<f64>::new();
        let an = t.param_owned(DenseArray::from_rows(2, 3, a0.clone()).unwrap());
        let bn = t.param_owned(DenseArray::from_rows(3, 4, b0.clone()).unwrap());
        let c = t.matmul(an, bn).unwrap();
        let s = t.sin(c);
        let l = t.mean_all(s);
        let grads = t.backward(l).unwrap();

        let h = 1e-6;
        for idx in 0..a0.len() {
            let mut ap = a0.clone();
            let mut am = a0.clone();
            ap[idx] += h;
            am[idx] -= h;
            let fd = (run(&ap, &b0) - run(&am, &b0)) / (2.0 * h);
            let an_grad = grads.get(an).unwrap().data()[idx];
            assert!(
                (an_grad - fd).abs() < 1e-8,
                "dA[{}]: {} vs fd {}",
                idx,
                an_grad,
                fd
            );
        }
        for idx in 0..b0.len() {
            let mut bp = b0.clone();
            let mut bm = b0.clone();
            bp[idx] += h;
            bm[idx] -= h;
            let fd = (run(&a0, &bp) - run(&a0, &bm)) / (2.0 * h);
            let bn_grad = grads.get(bn).unwrap().data()[idx];
            assert!((bn_grad - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.param_owned(DenseArray::scalar(2.0));
        let c = t.constant_owned(DenseArray::scalar(5.0));
        let y = t.mul(x, c).unwrap();
        let grads = t.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().scalar_value(), 5.0);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn repeated_backward_on_fresh_tapes_is_identical() {
        let build = || {
            let mut t = Tape::<f32>::new();
            let x = t.param_owned(DenseArray::from_vec(vec![0.3, -0.8, 1.7]));
            let s = t.sin(x);
            let sq = t.mul(s, s).unwrap();
            let l = t.mean_all(sq);
            let g = t.backward(l).unwrap();
            g.get(x).unwrap().data().to_vec()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn concat_and_slice_roundtrip_gradients() {
        let mut t = Tape::<f64>::new();
        let a = t.param_owned(DenseArray::from_rows(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let b = t.param_owned(DenseArray::from_rows(2, 1, vec![5., 6.]).unwrap());
        let cat = t.concat_cols(&[a, b]).unwrap();
        let sl = t.slice_cols(cat, 1, 2).unwrap(); // cols 1..3 -> [a.col1, b]
        let l = t.sum_all(sl);
        let grads = t.backward(l).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0., 1., 0., 1.]);
        assert_eq!(grads.get(b).unwrap().data(), &[1., 1.]);
    }

    #[test]
    fn bce_closed_forms() {
        let mut t = Tape::<f64>::new();
        let half = t.param_owned(DenseArray::from_vec(vec![0.5; 8]));
        let labels = t.constant_owned(DenseArray::from_vec(vec![1., 0., 1., 0., 1., 0., 1., 0.]));
        let l = t.bce_mean(half, labels, 1e-7).unwrap();
        assert!((t.value(l).scalar_value() - (2.0f64).ln()).abs() < 1e-12);

        let mut t2 = Tape::<f64>::new();
        let perfect = t2.param_owned(DenseArray::from_vec(vec![1., 0., 1., 0.]));
        let labels2 = t2.constant_owned(DenseArray::from_vec(vec![1., 0., 1., 0.]));
        let l2 = t2.bce_mean(perfect, labels2, 1e-7).unwrap();
        assert!(t2.value(l2).scalar_value() < 1e-5);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.param_owned(DenseArray::from_vec(vec![0.0, -2.0, 3.0]));
        let a = t.abs(x);
        let l = t.sum_all(a);
        let grads = t.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, -1.0, 1.0]);
    }
}
