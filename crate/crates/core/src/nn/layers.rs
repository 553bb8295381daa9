use rand::Rng;

use super::params::{Graph, ParamStore};
use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::{Tape, Tensor, Var};

/// `x W + b` with `W: [in, out]`, `b: [1, out]` broadcast over rows.
pub fn linear(t: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = t.matmul(x, w)?;
    t.add(xw, b)
}

/// Affine layer stored as `{prefix}.W` and `{prefix}.b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(prefix: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Linear { prefix: prefix.into(), in_dim, out_dim }
    }

    pub fn init(&self, store: &mut ParamStore, range: f64, seed: u64) -> Result<()> {
        store.init_uniform(&format!("{}.W", self.prefix), &[self.in_dim, self.out_dim], range, seed)?;
        store.init_uniform(&format!("{}.b", self.prefix), &[1, self.out_dim], range, seed)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.in_dim) {
            return Err(shape_err!("{}: input {:?}, expected {} columns", self.prefix, g.shape(x), self.in_dim));
        }
        let w = g.param(&format!("{}.W", self.prefix))?;
        let b = g.param(&format!("{}.b", self.prefix))?;
        linear(g, x, w, b)
    }
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: in training each element is zeroed with probability
/// `ratio` and survivors are scaled by `1 / (1 - ratio)`; in evaluation the
/// input is returned untouched.
pub fn dropout<R: Rng>(t: &mut Tape, x: Var, ratio: f64, mode: Mode, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(invalid_arg!("dropout ratio must be in [0, 1), got {ratio}"));
    }
    if mode == Mode::Eval || ratio == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - ratio);
    let mask: Vec<f64> = (0..t.value(x).numel())
        .map(|_| if rng.gen::<f64>() < ratio { 0.0 } else { keep })
        .collect();
    let mask = Tensor::new(t.shape(x).to_vec(), mask)?;
    t.mul_const(x, mask)
}

impl Graph<'_> {
    /// [`dropout`] driven by this graph's train flag and generator.
    pub fn dropout(&mut self, x: Var, ratio: f64) -> Result<Var> {
        let mode = if self.is_training() { Mode::Train } else { Mode::Eval };
        let mut rng = self.rng().clone();
        let out = dropout(self, x, ratio, mode, &mut rng);
        *self.rng() = rng;
        out
    }

    /// Embedding lookup: rows `ids` of the table `name`.
    pub fn embed(&mut self, name: &str, ids: &[usize]) -> Result<Var> {
        let table = self.param(name)?;
        self.gather_rows(table, ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn linear_cases() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![1.0, -2.0]));
        let eye = t.constant(Tensor::eye(2));
        let zb = t.constant(Tensor::zeros(&[1, 2]));
        let y = linear(&mut t, x, eye, zb).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, -2.0]);

        let w0 = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::row(vec![0.5, 1.5, -1.0]));
        let xs = t.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let y = linear(&mut t, xs, w0, b).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 1.5, -1.0, 0.5, 1.5, -1.0]);

        // [1 2] [[1 0 2] [3 -1 1]] + [1 1 1] = [8 -1 5]
        let w = t.constant(Tensor::from_rows(&[[1.0, 0.0, 2.0], [3.0, -1.0, 1.0]]).unwrap());
        let ones = t.constant(Tensor::row(vec![1.0; 3]));
        let x = t.constant(Tensor::row(vec![1.0, 2.0]));
        let y = linear(&mut t, x, w, ones).unwrap();
        assert_eq!(t.value(y).data(), &[8.0, -1.0, 5.0]);
    }

    #[test]
    fn dropout_modes() {
        let mut t = Tape::new();
        let mut r = rng::seeded(3);
        let x = t.constant(Tensor::full(&[1, 10], 2.0));
        assert_eq!(dropout(&mut t, x, 0.0, Mode::Train, &mut r).unwrap(), x);
        assert_eq!(dropout(&mut t, x, 0.7, Mode::Eval, &mut r).unwrap(), x);
        assert!(dropout(&mut t, x, 1.0, Mode::Train, &mut r).is_err());
        assert!(dropout(&mut t, x, -0.1, Mode::Train, &mut r).is_err());
    }

    #[test]
    fn dropout_zero_fraction_and_mean() {
        let n = 1_000_000;
        let mut t = Tape::new();
        let mut r = rng::seeded(42);
        let x = t.constant(Tensor::full(&[1, n], 1.0));
        let y = dropout(&mut t, x, 0.5, Mode::Train, &mut r).unwrap();
        let v = t.value(y).data();
        let zeros = v.iter().filter(|&&e| e == 0.0).count() as f64 / n as f64;
        assert!((zeros - 0.5).abs() < 0.01, "{zeros}");
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }
}
