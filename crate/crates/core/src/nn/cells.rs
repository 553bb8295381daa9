//! Recurrent cells.
//!
//! All cells work on row-major batches: inputs are `[batch, input_dim]`,
//! states `[batch, hidden_dim]`, weights `[input_dim, hidden_dim]` /
//! `[hidden_dim, hidden_dim]` and biases `[1, hidden_dim]`.
//!
//! GRU convention (update gate interpolates towards the candidate):
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! ĥ  = tanh(x W_h + b_h + r ⊙ (h U_h))
//! h' = (1 − z) ⊙ h + z ⊙ ĥ
//! ```
//!
//! LSTM:
//!
//! ```text
//! i, f, o = σ(x W_• + h U_• + b_•)
//! g  = tanh(x W_g + h U_g + b_g)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use super::params::{Graph, ParamStore};
use crate::error::{shape_err, Result};
use crate::tensor::{Tensor, Var};

/// A recurrent cell usable by the sequence encoders.
pub trait Cell {
    type State: Clone;

    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn zero_state(&self, g: &mut Graph, batch: usize) -> Self::State;
    fn step(&self, g: &mut Graph, x: Var, state: &Self::State) -> Result<Self::State>;
    /// The part of the state exposed as the cell output.
    fn output(state: &Self::State) -> Var;
    /// `old + mask ⊙ (new − old)`: rows with a zero mask keep their old state.
    fn blend(g: &mut Graph, new: &Self::State, old: &Self::State, mask: &Tensor) -> Result<Self::State>;
}

fn blend_var(g: &mut Graph, new: Var, old: Var, mask: &Tensor) -> Result<Var> {
    let delta = g.sub(new, old)?;
    let kept = g.mul_const(delta, mask.clone())?;
    g.add(old, kept)
}

/// `x W + h U + b` for one gate.
fn gate_pre(g: &mut Graph, prefix: &str, gate: &str, x: Var, h: Var) -> Result<Var> {
    let w = g.param(&format!("{prefix}.{gate}.W"))?;
    let u = g.param(&format!("{prefix}.{gate}.U"))?;
    let b = g.param(&format!("{prefix}.{gate}.b"))?;
    let xw = g.matmul(x, w)?;
    let hu = g.matmul(h, u)?;
    let s = g.add(xw, hu)?;
    g.add(s, b)
}

fn init_gates(
    store: &mut ParamStore,
    prefix: &str,
    gates: &[&str],
    input_dim: usize,
    hidden_dim: usize,
    range: f64,
    seed: u64,
) -> Result<()> {
    for gate in gates {
        store.init_uniform(&format!("{prefix}.{gate}.W"), &[input_dim, hidden_dim], range, seed)?;
        store.init_uniform(&format!("{prefix}.{gate}.U"), &[hidden_dim, hidden_dim], range, seed)?;
        store.init_uniform(&format!("{prefix}.{gate}.b"), &[1, hidden_dim], range, seed)?;
    }
    Ok(())
}

fn check_gates(store: &ParamStore, prefix: &str, gates: &[&str], input_dim: usize, hidden_dim: usize) -> Result<()> {
    for gate in gates {
        for (suffix, shape) in [
            ("W", [input_dim, hidden_dim]),
            ("U", [hidden_dim, hidden_dim]),
            ("b", [1, hidden_dim]),
        ] {
            let name = format!("{prefix}.{gate}.{suffix}");
            match store.get(&name) {
                Some(t) if t.shape() == shape => {}
                Some(t) => return Err(shape_err!("{name}: expected {shape:?}, found {:?}", t.shape())),
                None => return Err(shape_err!("missing parameter {name}")),
            }
        }
    }
    Ok(())
}

const GRU_GATES: [&str; 3] = ["update", "reset", "cand"];
const LSTM_GATES: [&str; 4] = ["input", "forget", "output", "cell"];

/// GRU parameters stored under `prefix` (`{prefix}.update.W`, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        GruCell { prefix: prefix.into(), input_dim, hidden_dim }
    }

    pub fn init(&self, store: &mut ParamStore, range: f64, seed: u64) -> Result<()> {
        init_gates(store, &self.prefix, &GRU_GATES, self.input_dim, self.hidden_dim, range, seed)
    }

    /// Checks that all six matrices and three biases exist with matching dims.
    pub fn validate(&self, store: &ParamStore) -> Result<()> {
        check_gates(store, &self.prefix, &GRU_GATES, self.input_dim, self.hidden_dim)
    }
}

impl Cell for GruCell {
    type State = Var;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn zero_state(&self, g: &mut Graph, batch: usize) -> Var {
        g.constant(Tensor::zeros(&[batch, self.hidden_dim]))
    }

    fn step(&self, g: &mut Graph, x: Var, h: &Var) -> Result<Var> {
        let h = *h;
        if g.shape(x) != [g.shape(h)[0], self.input_dim] || g.shape(h)[1] != self.hidden_dim {
            return Err(shape_err!(
                "gru {}: input {:?} / state {:?} vs dims ({}, {})",
                self.prefix,
                g.shape(x),
                g.shape(h),
                self.input_dim,
                self.hidden_dim
            ));
        }
        let p = &self.prefix;
        let z_pre = gate_pre(g, p, "update", x, h)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate_pre(g, p, "reset", x, h)?;
        let r = g.sigmoid(r_pre);

        let wh = g.param(&format!("{p}.cand.W"))?;
        let uh = g.param(&format!("{p}.cand.U"))?;
        let bh = g.param(&format!("{p}.cand.b"))?;
        let xw = g.matmul(x, wh)?;
        let xw = g.add(xw, bh)?;
        let hu = g.matmul(h, uh)?;
        let rhu = g.mul(r, hu)?;
        let pre = g.add(xw, rhu)?;
        let cand = g.tanh(pre);

        let diff = g.sub(cand, h)?;
        let step = g.mul(z, diff)?;
        g.add(h, step)
    }

    fn output(state: &Var) -> Var {
        *state
    }

    fn blend(g: &mut Graph, new: &Var, old: &Var, mask: &Tensor) -> Result<Var> {
        blend_var(g, *new, *old, mask)
    }
}

/// LSTM state: hidden output and memory cell.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// LSTM parameters stored under `prefix` (`{prefix}.input.W`, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        LstmCell { prefix: prefix.into(), input_dim, hidden_dim }
    }

    pub fn init(&self, store: &mut ParamStore, range: f64, seed: u64) -> Result<()> {
        init_gates(store, &self.prefix, &LSTM_GATES, self.input_dim, self.hidden_dim, range, seed)
    }

    pub fn validate(&self, store: &ParamStore) -> Result<()> {
        check_gates(store, &self.prefix, &LSTM_GATES, self.input_dim, self.hidden_dim)
    }
}

impl Cell for LstmCell {
    type State = LstmState;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Tensor::zeros(&[batch, self.hidden_dim]));
        LstmState { h, c: h }
    }

    fn step(&self, g: &mut Graph, x: Var, s: &LstmState) -> Result<LstmState> {
        if g.shape(x)[1] != self.input_dim {
            return Err(shape_err!("lstm {}: input {:?} vs dim {}", self.prefix, g.shape(x), self.input_dim));
        }
        let p = &self.prefix;
        let i_pre = gate_pre(g, p, "input", x, s.h)?;
        let i = g.sigmoid(i_pre);
        let f_pre = gate_pre(g, p, "forget", x, s.h)?;
        let f = g.sigmoid(f_pre);
        let o_pre = gate_pre(g, p, "output", x, s.h)?;
        let o = g.sigmoid(o_pre);
        let c_pre = gate_pre(g, p, "cell", x, s.h)?;
        let cand = g.tanh(c_pre);
        let keep = g.mul(f, s.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }

    fn output(state: &LstmState) -> Var {
        state.h
    }

    fn blend(g: &mut Graph, new: &LstmState, old: &LstmState, mask: &Tensor) -> Result<LstmState> {
        Ok(LstmState { h: blend_var(g, new.h, old.h, mask)?, c: blend_var(g, new.c, old.c, mask)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{grad_check_params, Trainable};
    use crate::tensor::init_uniform;

    fn zero_gru(input: usize, hidden: usize) -> (GruCell, ParamStore) {
        let cell = GruCell::new("gru", input, hidden);
        let mut store = ParamStore::new();
        cell.init(&mut store, 0.1, 1).unwrap();
        for name in store.names().map(String::from).collect::<Vec<_>>() {
            store.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
        (cell, store)
    }

    #[test]
    fn zero_gru_halves_previous_state() {
        let (cell, store) = zero_gru(3, 2);
        let mut g = Graph::eval(&store);
        let x = g.constant(Tensor::row(vec![0.3, -1.0, 2.0]));
        let h = g.constant(Tensor::row(vec![0.8, -0.4]));
        let out = cell.step(&mut g, x, &h).unwrap();
        assert_eq!(g.value(out).data(), &[0.4, -0.2]);

        let x0 = g.constant(Tensor::zeros(&[1, 3]));
        let h0 = cell.zero_state(&mut g, 1);
        let out = cell.step(&mut g, x0, &h0).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn gru_rejects_wrong_input_dim() {
        let (cell, store) = zero_gru(3, 2);
        let mut g = Graph::eval(&store);
        let x = g.constant(Tensor::row(vec![0.3, -1.0]));
        let h = cell.zero_state(&mut g, 1);
        assert!(cell.step(&mut g, x, &h).is_err());
        assert!(cell.validate(&store).is_ok());
        assert!(GruCell::new("gru", 4, 2).validate(&store).is_err());
    }

    #[test]
    fn gru_and_lstm_gradients() {
        for seed in 0..5 {
            let gru = GruCell::new("g", 3, 4);
            let lstm = LstmCell::new("l", 3, 4);
            let mut store = ParamStore::new();
            gru.init(&mut store, 0.5, seed).unwrap();
            lstm.init(&mut store, 0.5, seed).unwrap();
            let x = init_uniform(&[2, 3], -1.0, 1.0, seed + 100).unwrap();
            let h = init_uniform(&[2, 4], -1.0, 1.0, seed + 200).unwrap();
            let w = init_uniform(&[2, 4], -1.0, 1.0, seed + 300).unwrap();
            let err = grad_check_params(
                &store,
                &Trainable::All,
                |g| {
                    let xv = g.constant(x.clone());
                    let hv = g.constant(h.clone());
                    let a = gru.step(g, xv, &hv)?;
                    let l = lstm.step(g, xv, &LstmState { h: hv, c: hv })?;
                    let hc = g.add(l.h, l.c)?;
                    let both = g.add(a, hc)?;
                    let wb = g.mul_const(both, w.clone())?;
                    Ok(g.sum(wb))
                },
                1e-5,
                usize::MAX,
                seed,
            )
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
