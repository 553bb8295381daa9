//! Dense tensors and a reverse-mode gradient tape.
//!
//! [`Tensor`] is a plain value: a shape and a flat row-major `f64` buffer.
//! Differentiable computation happens on a [`Tape`], which records every
//! primitive applied to [`Var`] handles and replays them backwards in
//! [`Tape::backward`]. Almost every operation works on rank-2 tensors;
//! vectors are `[1, n]` rows, and a rank-1 tensor is treated as a single row
//! wherever a matrix is expected.

mod gradcheck;
mod kernels;
mod tape;

pub use gradcheck::{five_point, grad_check, relative_error};
pub use tape::{Tape, Var};

use rand::distributions::{Distribution, Uniform};

use crate::error::{invalid_arg, shape_err, Result};
use crate::rng;

/// Dense row-major tensor of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `shape` is non-empty with positive
    /// dimensions whose product matches `data.len()`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(shape_err!("shape {shape:?} must be non-empty with positive dimensions"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(shape_err!(
                "shape {shape:?} needs {numel} elements, got {}",
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// `[1]` tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// `[1, n]` row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor { shape: vec![1, values.len()], data: values }
    }

    /// Stacks equal-length rows into an `[m, n]` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(shape_err!("row {i} has {} columns, expected {n}", r.len()));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![m, n], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// `(rows, cols)` view; rank-1 tensors are one row.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [m, n] => Ok((*m, *n)),
            s => Err(shape_err!("expected rank 1 or 2, got shape {s:?}")),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().map_or(0, |d| d.0)
    }

    pub fn cols(&self) -> usize {
        self.dims2().map_or(0, |d| d.1)
    }

    /// Element `(i, j)` of a matrix.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.is_empty() {
            return Err(shape_err!("cannot reshape {:?} to {shape:?}", self.shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Maximum absolute elementwise difference to `other` (shapes must agree).
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `self · other` for `[m, k] × [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(shape_err!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape,
                other.shape
            ));
        }
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, &self.data, false, &other.data, false, &mut out, false);
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Elementwise binary op on equal shapes, or a `[1, n]` bias row against
    /// an `[m, n]` matrix.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Tensor { shape: self.shape.clone(), data });
        }
        let (m, n) = self.dims2()?;
        let (r, c) = other.dims2()?;
        if self.rank() == 2 && r == 1 && c == n {
            let mut data = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    data.push(f(self.data[i * n + j], other.data[j]));
                }
            }
            return Ok(Tensor { shape: self.shape.clone(), data });
        }
        Err(shape_err!("shapes {:?} and {:?} do not broadcast", self.shape, other.shape))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let mut out = self.clone();
        kernels::softmax_in_place(&mut out, axis, false)?;
        Ok(out)
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        let mut out = self.clone();
        kernels::softmax_in_place(&mut out, axis, true)?;
        Ok(out)
    }

    /// Concatenation along `axis` (0 = rows, 1 = columns; rank-1 inputs
    /// concatenate along their only axis).
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        kernels::concat(parts, axis)
    }

    /// Sub-range `[start, start + len)` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        kernels::slice(self, axis, start, len)
    }

    /// Index of the largest element of a row (first one wins ties).
    pub fn argmax_row(&self, i: usize) -> usize {
        argmax(self.row_slice(i))
    }
}

/// Position of the maximum of `xs`; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Tensor of i.i.d. draws from `U[low, high)`, fully determined by `seed`.
pub fn init_uniform(shape: &[usize], low: f64, high: f64, seed: u64) -> Result<Tensor> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(invalid_arg!("init_uniform needs a non-empty shape, got {shape:?}"));
    }
    if !(low < high) {
        return Err(invalid_arg!("init_uniform needs low < high, got [{low}, {high})"));
    }
    let dist = Uniform::new(low, high);
    let mut rng = rng::seeded(seed);
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| dist.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data)
}
