//! Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//!
//! The tape is rebuilt per forward pass (define-by-run). Operations record a
//! node only when at least one input is itself on the tape; computations over
//! constants run through the exact same value kernels but leave no trace.
//! That rule is what makes [`Tape::block_gradient`] a memory primitive and
//! not just a backward no-op: a blocked tensor is a constant, so everything
//! computed downstream of it (until it meets a tracked value) stays off the
//! tape entirely, and node count is governed by the tracked portion of the
//! graph alone.
//!
//! A tape is single-writer. Tensors created on one tape must not be fed to
//! another; doing so is a programming error and panics. Constant tensors
//! (no node) are freely shareable, including across threads.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Index of a node on its tape.
pub type NodeId = usize;

fn fmt_shape(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(","))
}

/// Immutable dense tensor. Data is shared (`Arc`), so clones are cheap and
/// `block_gradient` can return the identical buffer.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<[f64]>,
    node: Option<(u64, NodeId)>,
}

impl Tensor {
    /// Constant tensor: participates in forward computation, never receives
    /// gradient, records nothing on any tape.
    pub fn constant(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "tensor shape {} needs {} values, got {}",
                fmt_shape(&shape),
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data: data.into(), node: None })
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor { shape: vec![1], data: vec![v].into(), node: None }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel].into(), node: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn node_id(&self) -> Option<NodeId> {
        self.node.map(|(_, id)| id)
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of {} elements", self.data.len());
        self.data[0]
    }

    /// Same data and node, new shape metadata. Free: reshaping is not an
    /// operation and has identity gradient.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} ({} values) to {}",
                fmt_shape(&self.shape),
                self.data.len(),
                fmt_shape(&shape)
            )));
        }
        Ok(Tensor { shape, data: self.data.clone(), node: self.node })
    }

    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Where an operand came from: a tape node or a constant whose values are
/// retained for the backward pass.
#[derive(Debug, Clone)]
enum Src {
    Node(NodeId),
    Const(Arc<[f64]>),
}

impl Src {
    fn node(&self) -> Option<NodeId> {
        match self {
            Src::Node(id) => Some(*id),
            Src::Const(_) => None,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add { a: Src, b: Src },
    Sub { a: Src, b: Src },
    Mul { a: Src, b: Src },
    Scale { a: Src, factor: f64 },
    Matmul { a: Src, b: Src, m: usize, k: usize, n: usize },
    Relu { a: Src },
    Sigmoid { a: Src },
    Sum { a: Src },
    MeanAbs { a: Src },
    Concat { parts: Vec<Src>, part_len: usize },
    Slice { a: Src, offset: usize, len: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    out: Arc<[f64]>,
}

/// Append-only record of one forward pass. Parents always precede children,
/// so the backward sweep is a single reverse pass over node indices.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    /// Number of recorded nodes. Deterministic for a fixed computation; the
    /// memory-contract tests are built on this.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn assert_owned(&self, t: &Tensor) {
        if let Some((tape_id, _)) = t.node {
            assert_eq!(
                tape_id, self.id,
                "tensor from tape {} used with tape {}",
                tape_id, self.id
            );
        }
    }

    fn src_of(&self, t: &Tensor) -> Src {
        match t.node {
            Some((_, id)) => Src::Node(id),
            None => Src::Const(t.data.clone()),
        }
    }

    fn val<'a>(&'a self, s: &'a Src) -> &'a [f64] {
        match s {
            Src::Node(id) => &self.nodes[*id].out,
            Src::Const(data) => data,
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Arc<[f64]>) -> Tensor {
        let id = self.nodes.len();
        self.nodes.push(Node { op, out: data.clone() });
        Tensor { shape, data, node: Some((self.id, id)) }
    }

    /// Introduce a gradient target. The data is shared, not copied.
    /// Leafing a tensor that is already on a tape is a programming error.
    pub fn leaf(&mut self, t: &Tensor) -> Tensor {
        assert!(t.node.is_none(), "leaf() expects a constant tensor");
        self.push(Op::Leaf, t.shape.clone(), t.data.clone())
    }

    pub fn leaf_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::constant(shape, data)?;
        Ok(self.leaf(&t))
    }

    fn binary_elementwise(
        &mut self,
        name: &str,
        a: &Tensor,
        b: &Tensor,
        kernel: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Src, Src) -> Op,
    ) -> Result<Tensor> {
        self.assert_owned(a);
        self.assert_owned(b);
        if a.shape != b.shape {
            return Err(Error::shape(format!(
                "{}: lhs {} vs rhs {}",
                name,
                fmt_shape(&a.shape),
                fmt_shape(&b.shape)
            )));
        }
        let out: Vec<f64> = a.data.iter().zip(b.data.iter()).map(|(x, y)| kernel(*x, *y)).collect();
        if a.node.is_some() || b.node.is_some() {
            let (sa, sb) = (self.src_of(a), self.src_of(b));
            Ok(self.push(op(sa, sb), a.shape.clone(), out.into()))
        } else {
            Ok(Tensor { shape: a.shape.clone(), data: out.into(), node: None })
        }
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_elementwise("add", a, b, |x, y| x + y, |sa, sb| Op::Add { a: sa, b: sb })
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, |sa, sb| Op::Sub { a: sa, b: sb })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, |sa, sb| Op::Mul { a: sa, b: sb })
    }

    /// Scalar times tensor.
    pub fn scale(&mut self, a: &Tensor, factor: f64) -> Tensor {
        self.assert_owned(a);
        let out: Vec<f64> = a.data.iter().map(|x| x * factor).collect();
        if a.node.is_some() {
            let sa = self.src_of(a);
            self.push(Op::Scale { a: sa, factor }, a.shape.clone(), out.into())
        } else {
            Tensor { shape: a.shape.clone(), data: out.into(), node: None }
        }
    }

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.assert_owned(a);
        self.assert_owned(b);
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(Error::shape(format!(
                "matmul: lhs {} vs rhs {}",
                fmt_shape(&a.shape),
                fmt_shape(&b.shape)
            )));
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let out = matmul_val(&a.data, &b.data, m, k, n);
        if a.node.is_some() || b.node.is_some() {
            let (sa, sb) = (self.src_of(a), self.src_of(b));
            Ok(self.push(Op::Matmul { a: sa, b: sb, m, k, n }, vec![m, n], out.into()))
        } else {
            Ok(Tensor { shape: vec![m, n], data: out.into(), node: None })
        }
    }

    fn unary(
        &mut self,
        a: &Tensor,
        shape: Vec<usize>,
        out: Vec<f64>,
        op: impl FnOnce(Src) -> Op,
    ) -> Tensor {
        self.assert_owned(a);
        if a.node.is_some() {
            let sa = self.src_of(a);
            self.push(op(sa), shape, out.into())
        } else {
            Tensor { shape, data: out.into(), node: None }
        }
    }

    /// Elementwise max(x, 0). The gradient at exactly 0 is 0 (subgradient
    /// choice; `x > 0` gates both nothing-at-zero and the forward branch).
    pub fn relu(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a.data.iter().map(|x| if *x > 0.0 { *x } else { 0.0 }).collect();
        self.unary(a, a.shape.clone(), out, |sa| Op::Relu { a: sa })
    }

    /// Elementwise logistic function 1/(1+e^(-x)).
    pub fn sigmoid(&mut self, a: &Tensor) -> Tensor {
        let out: Vec<f64> = a.data.iter().map(|x| sigmoid_val(*x)).collect();
        self.unary(a, a.shape.clone(), out, |sa| Op::Sigmoid { a: sa })
    }

    /// Sum of all entries, as a scalar tensor.
    pub fn sum(&mut self, a: &Tensor) -> Tensor {
        let s: f64 = a.data.iter().sum();
        self.unary(a, vec![1], vec![s], |sa| Op::Sum { a: sa })
    }

    /// Mean absolute value of all entries, as a scalar tensor.
    pub fn mean_abs(&mut self, a: &Tensor) -> Tensor {
        let n = a.data.len().max(1);
        let s: f64 = a.data.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        self.unary(a, vec![1], vec![s], |sa| Op::MeanAbs { a: sa })
    }

    /// Stack equally-shaped slices along a new leading axis.
    pub fn concat_slices(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_slices: empty slice list".into()));
        }
        let part_shape = parts[0].shape.clone();
        for (i, p) in parts.iter().enumerate() {
            self.assert_owned(p);
            if p.shape != part_shape {
                return Err(Error::shape(format!(
                    "concat_slices: slice 0 is {} but slice {} is {}",
                    fmt_shape(&part_shape),
                    i,
                    fmt_shape(&p.shape)
                )));
            }
        }
        let part_len = parts[0].numel();
        let mut out = Vec::with_capacity(part_len * parts.len());
        for p in parts {
            out.extend_from_slice(&p.data);
        }
        let mut shape = Vec::with_capacity(part_shape.len() + 1);
        shape.push(parts.len());
        shape.extend_from_slice(&part_shape);
        if parts.iter().any(|p| p.node.is_some()) {
            let srcs: Vec<Src> = parts.iter().map(|p| self.src_of(p)).collect();
            Ok(self.push(Op::Concat { parts: srcs, part_len }, shape, out.into()))
        } else {
            Ok(Tensor { shape, data: out.into(), node: None })
        }
    }

    /// Exact inverse of [`Tape::concat_slices`]: splits along the leading axis.
    pub fn split_slices(&mut self, v: &Tensor) -> Result<Vec<Tensor>> {
        self.assert_owned(v);
        if v.shape.len() < 2 {
            return Err(Error::shape(format!(
                "split_slices: need at least 2 axes, got {}",
                fmt_shape(&v.shape)
            )));
        }
        let d = v.shape[0];
        let part_shape: Vec<usize> = v.shape[1..].to_vec();
        let part_len: usize = part_shape.iter().product();
        let tracked = v.node.is_some();
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let data: Vec<f64> = v.data[i * part_len..(i + 1) * part_len].to_vec();
            if tracked {
                let sa = self.src_of(v);
                out.push(self.push(
                    Op::Slice { a: sa, offset: i * part_len, len: part_len },
                    part_shape.clone(),
                    data.into(),
                ));
            } else {
                out.push(Tensor { shape: part_shape.clone(), data: data.into(), node: None });
            }
        }
        Ok(out)
    }

    /// Forward-identity, backward-opaque. The result shares the input's data
    /// buffer bit-for-bit but is a constant: no gradient flows through it and
    /// nothing computed from it (alone) is recorded.
    pub fn block_gradient(&self, a: &Tensor) -> Tensor {
        self.assert_owned(a);
        Tensor { shape: a.shape.clone(), data: a.data.clone(), node: None }
    }

    /// Reverse sweep from a scalar output. Seeds the output gradient with 1,
    /// visits each node at most once in reverse index order, and returns the
    /// accumulated per-node gradients. A constant output yields an empty map.
    pub fn backward(&self, output: &Tensor) -> Result<Gradients> {
        self.assert_owned(output);
        if output.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar output, got shape {}",
                fmt_shape(&output.shape)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let out_id = match output.node {
            Some((_, id)) => id,
            None => return Ok(Gradients { tape_id: self.id, grads }),
        };
        grads[out_id] = Some(vec![1.0]);

        for id in (0..=out_id).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(&self.nodes[id].op, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { tape_id: self.id, grads })
    }

    fn propagate(&self, op: &Op, node_id: NodeId, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Accumulate `up`-derived contributions into a parent's buffer, doing
        // nothing when the parent is a constant.
        fn into_parent(
            grads: &mut [Option<Vec<f64>>],
            src: &Src,
            len: usize,
            write: impl FnOnce(&mut [f64]),
        ) {
            if let Some(pid) = src.node() {
                let buf = grads[pid].get_or_insert_with(|| vec![0.0; len]);
                write(buf);
            }
        }

        match op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                into_parent(grads, a, up.len(), |buf| {
                    for (g, u) in buf.iter_mut().zip(up) {
                        *g += u;
                    }
                });
                into_parent(grads, b, up.len(), |buf| {
                    for (g, u) in buf.iter_mut().zip(up) {
                        *g += u;
                    }
                });
            }
            Op::Sub { a, b } => {
                into_parent(grads, a, up.len(), |buf| {
                    for (g, u) in buf.iter_mut().zip(up) {
                        *g += u;
                    }
                });
                into_parent(grads, b, up.len(), |buf| {
                    for (g, u) in buf.iter_mut().zip(up) {
                        *g -= u;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.val(a), self.val(b));
                into_parent(grads, a, up.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += up[i] * bv[i];
                    }
                });
                into_parent(grads, b, up.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += up[i] * av[i];
                    }
                });
            }
            Op::Scale { a, factor } => {
                into_parent(grads, a, up.len(), |buf| {
                    for (g, u) in buf.iter_mut().zip(up) {
                        *g += u * factor;
                    }
                });
            }
            Op::Matmul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let (av, bv) = (self.val(a), self.val(b));
                // grad_a = upstream · bᵀ
                into_parent(grads, a, m * k, |buf| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += up[i * n + j] * bv[p * n + j];
                            }
                            buf[i * k + p] += acc;
                        }
                    }
                });
                // grad_b = aᵀ · upstream
                into_parent(grads, b, k * n, |buf| {
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += av[i * k + p] * up[i * n + j];
                            }
                            buf[p * n + j] += acc;
                        }
                    }
                });
            }
            Op::Relu { a } => {
                let av = self.val(a);
                into_parent(grads, a, up.len(), |buf| {
                    for i in 0..buf.len() {
                        if av[i] > 0.0 {
                            buf[i] += up[i];
                        }
                    }
                });
            }
            Op::Sigmoid { a } => {
                let out = &self.nodes[node_id].out;
                into_parent(grads, a, up.len(), |buf| {
                    for i in 0..buf.len() {
                        buf[i] += up[i] * out[i] * (1.0 - out[i]);
                    }
                });
            }
            Op::Sum { a } => {
                let len = self.val(a).len();
                into_parent(grads, a, len, |buf| {
                    for g in buf.iter_mut() {
                        *g += up[0];
                    }
                });
            }
            Op::MeanAbs { a } => {
                let av = self.val(a);
                let n = av.len().max(1) as f64;
                into_parent(grads, a, av.len(), |buf| {
                    for i in 0..buf.len() {
                        let sign = if av[i] > 0.0 {
                            1.0
                        } else if av[i] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        buf[i] += up[0] * sign / n;
                    }
                });
            }
            Op::Concat { parts, part_len } => {
                for (i, part) in parts.iter().enumerate() {
                    let seg = &up[i * part_len..(i + 1) * part_len];
                    into_parent(grads, part, *part_len, |buf| {
                        for (g, u) in buf.iter_mut().zip(seg) {
                            *g += u;
                        }
                    });
                }
            }
            Op::Slice { a, offset, len } => {
                let parent_len = self.val(a).len();
                into_parent(grads, a, parent_len, |buf| {
                    for i in 0..*len {
                        buf[offset + i] += up[i];
                    }
                });
            }
        }
    }
}

/// Gradient map produced by [`Tape::backward`], keyed by node id.
#[derive(Debug)]
pub struct Gradients {
    tape_id: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `t`, shaped like `t`. `None` when `t` is a
    /// constant or no gradient reached it.
    pub fn wrt(&self, t: &Tensor) -> Option<Tensor> {
        let (tape_id, id) = t.node?;
        assert_eq!(tape_id, self.tape_id, "gradient lookup across tapes");
        let g = self.grads.get(id)?.as_ref()?;
        Some(Tensor { shape: t.shape.clone(), data: g.clone().into(), node: None })
    }

    /// Like [`Gradients::wrt`] but substituting exact zeros for absent flow.
    pub fn wrt_or_zeros(&self, t: &Tensor) -> Tensor {
        self.wrt(t).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
    }
}

fn sigmoid_val(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matmul_val(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Central finite differences: (f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h per entry.
/// The independent oracle for every backward rule in this crate.
pub fn finite_diff_gradient(
    mut f: impl FnMut(&Tensor) -> f64,
    x: &Tensor,
    step: f64,
) -> Tensor {
    assert!(step > 0.0, "finite_diff_gradient: step must be positive");
    let mut grad = vec![0.0; x.numel()];
    let base: Vec<f64> = x.data().to_vec();
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let fp = f(&Tensor::constant(x.shape().to_vec(), plus).expect("shape"));
        let fm = f(&Tensor::constant(x.shape().to_vec(), minus).expect("shape"));
        grad[i] = (fp - fm) / (2.0 * step);
    }
    Tensor { shape: x.shape().to_vec(), data: grad.into(), node: None }
}

/// Relative error with the floor the gradient checks use throughout:
/// |a−b| / max(|b|, 1e-8).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-8)
}
