use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Relative error used by the finite-difference checks:
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Five-point central difference `(-f(2h) + 8f(h) - 8f(-h) + f(-2h)) / 12h`
/// of `f` at offset 0. Truncation error is O(h⁴), so steps around 1e-3 keep
/// both truncation and roundoff far below the check tolerance.
pub fn five_point<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (p2, p1, m1, m2) = (f(2.0 * h)?, f(h)?, f(-h)?, f(-2.0 * h)?);
    Ok((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h))
}

/// Compares the tape gradient of the scalar `f(x)` against [`five_point`]
/// differences with step `eps`, returning the largest relative error over
/// the elements of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), true);
    let loss = f(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape.grad(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));

    let eval = |probe: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(probe, false);
        let out = f(&mut t, v)?;
        Ok(t.value(out).data()[0])
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let numeric = five_point(
            |d| {
                let mut probe = x.clone();
                probe.data_mut()[i] += d;
                eval(probe)
            },
            eps,
        )?;
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::init_uniform;

    #[test]
    fn sigmoid_sum_passes() {
        let x = init_uniform(&[3, 4], -2.0, 2.0, 11).unwrap();
        let err = grad_check(|t, x| {
            let s = t.sigmoid(x);
            Ok(t.sum(s))
        }, &x, 1e-5)
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_function_is_exact() {
        let x = init_uniform(&[5], -1.0, 1.0, 2).unwrap();
        let err = grad_check(|t, x| Ok(t.sum(x)), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }
}
