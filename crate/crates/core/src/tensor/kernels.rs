use super::Tensor;
use crate::error::{shape_err, Result};

/// `out (+)= op(a) · op(b)` where `op(a)` is `[m, k]` and `op(b)` is `[k, n]`.
/// A transposed operand is stored in its untransposed layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    out: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements of the three slices, whose lengths are checked by callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Lanes of a rank-1/2 tensor along `axis`: `(count, len, lane_stride, elem_stride)`.
pub(crate) fn lanes(t: &Tensor, axis: usize) -> Result<(usize, usize, usize, usize)> {
    match (t.shape(), axis) {
        ([n], 0) => Ok((1, *n, 0, 1)),
        ([m, n], 1) => Ok((*m, *n, *n, 1)),
        ([m, n], 0) => Ok((*n, *m, 1, *n)),
        (s, a) => Err(shape_err!("axis {a} out of range for shape {s:?}")),
    }
}

pub(crate) fn softmax_in_place(t: &mut Tensor, axis: usize, log: bool) -> Result<()> {
    let (count, len, lane_stride, stride) = lanes(t, axis)?;
    let data = t.data_mut();
    for lane in 0..count {
        let base = lane * lane_stride;
        let mut max = f64::NEG_INFINITY;
        for i in 0..len {
            max = max.max(data[base + i * stride]);
        }
        let mut z = 0.0;
        for i in 0..len {
            z += (data[base + i * stride] - max).exp();
        }
        let log_z = z.ln();
        for i in 0..len {
            let x = &mut data[base + i * stride];
            *x = if log { *x - max - log_z } else { (*x - max).exp() / z };
        }
    }
    Ok(())
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
    let rank = first.rank();
    if parts.iter().any(|p| p.rank() != rank) {
        return Err(shape_err!("concat of tensors with different ranks"));
    }
    match (rank, axis) {
        (1, 0) => {
            let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            let n = parts.iter().map(|p| p.numel()).sum();
            Tensor::new(vec![n], data)
        }
        (2, 0) => {
            let cols = first.shape()[1];
            if let Some(p) = parts.iter().find(|p| p.shape()[1] != cols) {
                return Err(shape_err!(
                    "concat along rows: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                ));
            }
            let rows = parts.iter().map(|p| p.shape()[0]).sum();
            let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
            Tensor::new(vec![rows, cols], data)
        }
        (2, 1) => {
            let rows = first.shape()[0];
            if let Some(p) = parts.iter().find(|p| p.shape()[0] != rows) {
                return Err(shape_err!(
                    "concat along columns: {:?} vs {:?}",
                    first.shape(),
                    p.shape()
                ));
            }
            let cols: usize = parts.iter().map(|p| p.shape()[1]).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for p in parts {
                    data.extend_from_slice(p.row_slice(i));
                }
            }
            Tensor::new(vec![rows, cols], data)
        }
        _ => Err(shape_err!("concat axis {axis} out of range for rank {rank}")),
    }
}

pub(crate) fn slice(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let shape = t.shape();
    let extent = *shape.get(axis).ok_or_else(|| shape_err!("slice axis {axis} out of range"))?;
    if len == 0 || start + len > extent {
        return Err(shape_err!("slice [{start}, {}) out of range 0..{extent}", start + len));
    }
    match (shape.len(), axis) {
        (1, 0) => Tensor::new(vec![len], t.data()[start..start + len].to_vec()),
        (2, 0) => {
            let n = shape[1];
            Tensor::new(vec![len, n], t.data()[start * n..(start + len) * n].to_vec())
        }
        (2, 1) => {
            let (m, n) = (shape[0], shape[1]);
            let mut data = Vec::with_capacity(m * len);
            for i in 0..m {
                data.extend_from_slice(&t.data()[i * n + start..i * n + start + len]);
            }
            Tensor::new(vec![m, len], data)
        }
        _ => Err(shape_err!("slice on rank {} unsupported", shape.len())),
    }
}
