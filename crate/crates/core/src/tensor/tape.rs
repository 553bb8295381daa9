use std::sync::Arc;

use super::kernels::{self, gemm, lanes};
use super::Tensor;
use crate::error::{invalid_arg, shape_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Matmul(Var, Var),
    Transpose(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    SumAll(Var),
    SumAxis(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<Vec<usize>>),
    Pick(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Records primitive operations in execution order so that gradients can be
/// propagated back from a scalar loss.
///
/// An operation is only recorded with its inputs when at least one input
/// requires a gradient; otherwise its result is stored as a constant. Leaf
/// gradients persist on the tape and accumulate over repeated
/// [`backward`](Tape::backward) calls until [`zero_grad`](Tape::zero_grad).
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
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

    /// Number of nodes that participate in gradient propagation.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| !matches!(n.op, Op::Leaf)).count()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.leaf_shared(Arc::new(value), requires_grad)
    }

    pub fn leaf_shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value: Arc::new(value), requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// `a + b` for equal shapes, or `[m, n] + [1, n]` bias rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.zip_with(vb, |x, y| x + y)?;
        let op = if va.shape() == vb.shape() { Op::Add(a, b) } else { Op::AddRow(a, b) };
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).zip_with(self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Hadamard product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Hadamard product with a constant (masks, dropout).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        if self.shape(a) != c.shape() {
            return Err(shape_err!("mul_const: {:?} vs {:?}", self.shape(a), c.shape()));
        }
        let out = self.value(a).zip_with(&c, |x, y| x * y)?;
        Ok(self.push(out, Op::MulConst(a, c), &[a]))
    }

    /// Scales row `i` of `a: [m, n]` by `c[i]` where `c: [m, 1]`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if self.shape(c) != [m, 1] {
            return Err(shape_err!("mul_col: {:?} vs column {:?}", self.shape(a), self.shape(c)));
        }
        let (va, vc) = (self.value(a).data(), self.value(c).data());
        let data = (0..m * n).map(|idx| va[idx] * vc[idx / n]).collect();
        let out = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(out, Op::MulCol(a, c), &[a, c]))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::Matmul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).softmax(axis)?;
        Ok(self.push(out, Op::Softmax(a, axis), &[a]))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = self.value(a).log_softmax(axis)?;
        Ok(self.push(out, Op::LogSoftmax(a, axis), &[a]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = kernels::concat(&values, axis)?;
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = self.value(a).slice(axis, start, len)?;
        Ok(self.push(out, Op::Slice(a, axis, start), &[a]))
    }

    /// Sum of all elements as a `[1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a), &[a])
    }

    /// Sum over `axis` of a matrix, keeping the reduced dimension.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let v = self.value(a).data();
        let out = match axis {
            1 => Tensor::new(vec![m, 1], (0..m).map(|i| v[i * n..(i + 1) * n].iter().sum()).collect())?,
            0 => {
                let mut s = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        s[j] += v[i * n + j];
                    }
                }
                Tensor::new(vec![1, n], s)?
            }
            _ => return Err(shape_err!("sum_axis: axis {axis} out of range")),
        };
        Ok(self.push(out, Op::SumAxis(a, axis), &[a]))
    }

    /// Rows `idx[0], idx[1], ...` of a matrix, stacked.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if idx.is_empty() {
            return Err(invalid_arg!("gather_rows with no indices"));
        }
        let v = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &r in idx {
            if r >= m {
                return Err(shape_err!("gather_rows: row {r} out of range 0..{m}"));
            }
            data.extend_from_slice(&v[r * n..(r + 1) * n]);
        }
        let out = Tensor::new(vec![idx.len(), n], data)?;
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), &[a]))
    }

    /// Output row `r` is the sum of the input rows listed in `groups[r]`
    /// (a zero row for an empty group).
    pub fn segment_sum(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if groups.is_empty() {
            return Err(invalid_arg!("segment_sum with no groups"));
        }
        let v = self.value(a).data();
        let mut data = vec![0.0; groups.len() * n];
        for (r, g) in groups.iter().enumerate() {
            for &src in g {
                if src >= m {
                    return Err(shape_err!("segment_sum: row {src} out of range 0..{m}"));
                }
                for j in 0..n {
                    data[r * n + j] += v[src * n + j];
                }
            }
        }
        let out = Tensor::new(vec![groups.len(), n], data)?;
        Ok(self.push(out, Op::SegmentSum(a, groups), &[a]))
    }

    /// `out[i] = a[i, idx[i]]` as an `[m, 1]` column.
    pub fn pick(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if idx.len() != m {
            return Err(shape_err!("pick: {} indices for {m} rows", idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
            return Err(shape_err!("pick: column {bad} out of range 0..{n}"));
        }
        let v = self.value(a).data();
        let out = Tensor::new(vec![m, 1], (0..m).map(|i| v[i * n + idx[i]]).collect())?;
        Ok(self.push(out, Op::Pick(a, idx.to_vec()), &[a]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Propagates d`loss`/d(node) back through the recorded operations and
    /// adds the result into every reachable leaf that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(invalid_arg!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut local: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        local[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                if self.grads.len() <= i {
                    self.grads.resize_with(i + 1, || None);
                }
                match &mut self.grads[i] {
                    Some(acc) => add_into(acc.data_mut(), g.data()),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(i, &g, &mut local)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, local: &mut [Option<Tensor>]) -> Result<()> {
        let nodes = &self.nodes;
        let y = &nodes[i].value;
        let gd = g.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = local[v.0].get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape()));
            f(slot.data_mut());
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, gd));
                acc(*b, &mut |d| add_into(d, gd));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |d| add_into(d, gd));
                let n = nodes[b.0].value.numel();
                acc(*b, &mut |d| {
                    for (k, x) in gd.iter().enumerate() {
                        d[k % n] += x;
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, gd));
                acc(*b, &mut |d| {
                    for (x, g) in d.iter_mut().zip(gd) {
                        *x -= g;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * vb[k];
                    }
                });
                acc(*b, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * va[k];
                    }
                });
            }
            Op::MulConst(a, c) => {
                let c = c.data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * c[k];
                    }
                });
            }
            Op::MulCol(a, c) => {
                let n = nodes[a.0].value.cols();
                let (va, vc) = (nodes[a.0].value.data(), nodes[c.0].value.data());
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * vc[k / n];
                    }
                });
                acc(*c, &mut |d| {
                    for k in 0..gd.len() {
                        d[k / n] += gd[k] * va[k];
                    }
                });
            }
            Op::Affine(a, s) => {
                acc(*a, &mut |d| {
                    for (x, g) in d.iter_mut().zip(gd) {
                        *x += s * g;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let yd = y.data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * yd[k] * (1.0 - yd[k]);
                    }
                });
            }
            Op::Tanh(a) => {
                let yd = y.data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * (1.0 - yd[k] * yd[k]);
                    }
                });
            }
            Op::Exp(a) => {
                let yd = y.data();
                acc(*a, &mut |d| {
                    for k in 0..d.len() {
                        d[k] += gd[k] * yd[k];
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = va.dims2()?;
                let n = vb.cols();
                acc(*a, &mut |d| gemm(m, n, k, gd, false, vb.data(), true, d, true));
                acc(*b, &mut |d| gemm(k, m, n, va.data(), true, gd, false, d, true));
            }
            Op::Transpose(a) => {
                let gt = g.transpose()?;
                acc(*a, &mut |d| add_into(d, gt.data()));
            }
            Op::Softmax(a, axis) => {
                let (count, len, ls, es) = lanes(y, *axis)?;
                let yd = y.data();
                acc(*a, &mut |d| {
                    for lane in 0..count {
                        let base = lane * ls;
                        let dot: f64 = (0..len).map(|t| gd[base + t * es] * yd[base + t * es]).sum();
                        for t in 0..len {
                            let k = base + t * es;
                            d[k] += yd[k] * (gd[k] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(a, axis) => {
                let (count, len, ls, es) = lanes(y, *axis)?;
                let yd = y.data();
                acc(*a, &mut |d| {
                    for lane in 0..count {
                        let base = lane * ls;
                        let total: f64 = (0..len).map(|t| gd[base + t * es]).sum();
                        for t in 0..len {
                            let k = base + t * es;
                            d[k] += gd[k] - yd[k].exp() * total;
                        }
                    }
                });
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let extent = match (nodes[p.0].value.rank(), *axis) {
                        (1, _) => nodes[p.0].value.numel(),
                        (_, ax) => nodes[p.0].value.shape()[ax],
                    };
                    let piece = g.slice(*axis, offset, extent)?;
                    acc(p, &mut |d| add_into(d, piece.data()));
                    offset += extent;
                }
            }
            Op::Slice(a, axis, start) => {
                let src = nodes[a.0].value.shape();
                let len = y.shape()[*axis];
                acc(*a, &mut |d| match (src.len(), *axis) {
                    (1, _) => add_into(&mut d[*start..start + len], gd),
                    (_, 0) => {
                        let n = src[1];
                        add_into(&mut d[start * n..(start + len) * n], gd);
                    }
                    _ => {
                        let (m, n) = (src[0], src[1]);
                        for r in 0..m {
                            add_into(&mut d[r * n + start..r * n + start + len], &gd[r * len..(r + 1) * len]);
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let s = gd[0];
                acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += s));
            }
            Op::SumAxis(a, axis) => {
                let (m, n) = nodes[a.0].value.dims2()?;
                let axis = *axis;
                acc(*a, &mut |d| {
                    for r in 0..m {
                        for c in 0..n {
                            d[r * n + c] += if axis == 1 { gd[r] } else { gd[c] };
                        }
                    }
                });
            }
            Op::GatherRows(a, idx) => {
                let n = y.cols();
                acc(*a, &mut |d| {
                    for (r, &src) in idx.iter().enumerate() {
                        add_into(&mut d[src * n..(src + 1) * n], &gd[r * n..(r + 1) * n]);
                    }
                });
            }
            Op::SegmentSum(a, groups) => {
                let n = y.cols();
                acc(*a, &mut |d| {
                    for (r, grp) in groups.iter().enumerate() {
                        for &src in grp {
                            add_into(&mut d[src * n..(src + 1) * n], &gd[r * n..(r + 1) * n]);
                        }
                    }
                });
            }
            Op::Pick(a, idx) => {
                let n = nodes[a.0].value.cols();
                acc(*a, &mut |d| {
                    for (r, &j) in idx.iter().enumerate() {
                        d[r * n + j] += gd[r];
                    }
                });
            }
        }
        Ok(())
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

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elementwise_values() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::row(vec![0.0]));
        let sg = t.sigmoid(z);
        assert_eq!(t.value(sg).data(), &[0.5]);
        let th = t.tanh(z);
        assert_eq!(t.value(th).data(), &[0.0]);
        let a = t.constant(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let b = t.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        let s = t.add(a, b).unwrap();
        assert_eq!(t.value(s).data(), &[4.0, 6.0]);
        let c = t.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        assert!(matches!(t.add(a, c), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2, 3]), true);
        let l = t.sum(x);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn square_of_product() {
        // loss = (w x)^2, d/dw = 2 w x^2
        let (w0, x0) = (1.5, -2.0);
        let mut t = Tape::new();
        let w = t.leaf(Tensor::new(vec![1, 1], vec![w0]).unwrap(), true);
        let x = t.constant(Tensor::new(vec![1, 1], vec![x0]).unwrap());
        let wx = t.matmul(w, x).unwrap();
        let sq = t.mul(wx, wx).unwrap();
        let l = t.sum(sq);
        t.backward(l).unwrap();
        assert!((t.grad(w).unwrap().data()[0] - 2.0 * w0 * x0 * x0).abs() < 1e-12);
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn unreachable_leaf_gets_no_gradient_and_repeated_backward_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(vec![1.0, 2.0]), true);
        let unused = t.leaf(Tensor::row(vec![5.0]), true);
        let l = t.sum(x);
        t.backward(l).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 2.0]);
        assert!(t.grad(unused).is_none());
        t.zero_grad();
        assert!(t.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(vec![1.0, 2.0]), true);
        let y = t.tanh(x);
        assert!(matches!(t.backward(y), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::row(vec![1.0]));
        let b = t.tanh(a);
        assert!(!t.requires_grad(b));
        assert_eq!(t.recorded_ops(), 0);
        let p = t.leaf(Tensor::row(vec![1.0]), true);
        let _ = t.add(p, b).unwrap();
        assert_eq!(t.recorded_ops(), 1);
    }
}
