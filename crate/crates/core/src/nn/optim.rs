use std::collections::BTreeMap;

use super::params::ParamStore;
use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::Tensor;

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

/// L2 norm over every gradient element.
pub fn global_norm(grads: &Gradients) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

/// Rescales all gradients by `threshold / norm` when their global L2 norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(invalid_arg!("clipping threshold must be positive, got {threshold}"));
    }
    let norm = global_norm(grads);
    if norm > threshold {
        let s = threshold / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    Ok(norm)
}

/// Adam moments and hyper-parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }

    /// One bias-corrected Adam update of every parameter that has a gradient.
    /// The step counter advances even when `grads` is empty.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(invalid_arg!("learning rate must be positive, got {lr}"));
        }
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| invalid_arg!("gradient for unknown parameter `{name}`"))?;
            if p.shape() != g.shape() {
                return Err(shape_err!("{name}: parameter {:?} vs gradient {:?}", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let p = params.get_mut(name).expect("checked above");
            let (md, vd, pd) = (m.data_mut(), v.data_mut(), p.data_mut());
            for (k, &gk) in g.data().iter().enumerate() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * gk;
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = md[k] / c1;
                let vhat = vd[k] / c2;
                pd[k] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
