use super::cells::Cell;
use super::params::Graph;
use crate::error::{invalid_arg, Result};
use crate::tensor::{Tensor, Var};

/// Output of a bidirectional encoder over a padded, time-major batch.
#[derive(Clone, Debug)]
pub struct BiEncoding {
    /// One `[batch, 2 * hidden]` matrix per time step: forward ⊕ backward.
    pub outputs: Vec<Var>,
    /// Forward state after each sequence's last real token.
    pub fwd_final: Var,
    /// Backward state after reading each sequence right to left (position 0).
    pub bwd_final: Var,
}

/// Per-step `[batch, dim]` 0/1 masks, or `None` when every row is active.
pub fn length_masks(lengths: &[usize], steps: usize, dim: usize) -> Vec<Option<Tensor>> {
    (0..steps)
        .map(|t| {
            if lengths.iter().all(|&l| t < l) {
                return None;
            }
            let mut m = Tensor::zeros(&[lengths.len(), dim]);
            for (b, &l) in lengths.iter().enumerate() {
                if t < l {
                    m.data_mut()[b * dim..(b + 1) * dim].fill(1.0);
                }
            }
            Some(m)
        })
        .collect()
}

fn check_lengths(inputs: &[Var], lengths: &[usize], g: &Graph) -> Result<usize> {
    let first = *inputs.first().ok_or_else(|| invalid_arg!("cannot encode an empty sequence"))?;
    let batch = g.shape(first)[0];
    if lengths.len() != batch {
        return Err(invalid_arg!("{} lengths for a batch of {batch}", lengths.len()));
    }
    if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > inputs.len()) {
        return Err(invalid_arg!("sequence length {bad} outside 1..={}", inputs.len()));
    }
    Ok(batch)
}

/// Runs `cell` over the steps in `order`, returning per-step outputs (in
/// time order) and the final state.
fn run<C: Cell>(
    g: &mut Graph,
    cell: &C,
    inputs: &[Var],
    masks: &[Option<Tensor>],
    batch: usize,
    reverse: bool,
) -> Result<(Vec<Var>, C::State)> {
    let steps = inputs.len();
    let mut state = cell.zero_state(g, batch);
    let mut outs = vec![None; steps];
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let next = cell.step(g, inputs[t], &state)?;
        state = match &masks[t] {
            Some(m) => C::blend(g, &next, &state, m)?,
            None => next,
        };
        outs[t] = Some(C::output(&state));
    }
    Ok((outs.into_iter().map(|o| o.expect("every step visited")).collect(), state))
}

/// Bidirectional recurrent encoding: `h_i = fwd_i ⊕ bwd_i`.
///
/// `inputs` holds one `[batch, input_dim]` matrix per time step; rows of
/// sequences shorter than the batch maximum are padding and are skipped by
/// both directions (padding positions are never read by the backward pass).
pub fn birnn_encode<C: Cell>(
    g: &mut Graph,
    inputs: &[Var],
    lengths: &[usize],
    fwd: &C,
    bwd: &C,
) -> Result<BiEncoding> {
    let batch = check_lengths(inputs, lengths, g)?;
    let masks = length_masks(lengths, inputs.len(), fwd.hidden_dim());
    let (f_out, f_state) = run(g, fwd, inputs, &masks, batch, false)?;
    let bmasks = if bwd.hidden_dim() == fwd.hidden_dim() {
        masks
    } else {
        length_masks(lengths, inputs.len(), bwd.hidden_dim())
    };
    let (b_out, b_state) = run(g, bwd, inputs, &bmasks, batch, true)?;
    let outputs = f_out
        .iter()
        .zip(&b_out)
        .map(|(&f, &b)| g.concat(&[f, b], 1))
        .collect::<Result<Vec<_>>>()?;
    Ok(BiEncoding { outputs, fwd_final: C::output(&f_state), bwd_final: C::output(&b_state) })
}

/// Stacked bidirectional encoder; layer `k + 1` reads layer `k`'s outputs.
/// Returns every layer's encoding, bottom first.
pub fn stacked_birnn_encode<C: Cell>(
    g: &mut Graph,
    inputs: &[Var],
    lengths: &[usize],
    layers: &[(C, C)],
) -> Result<Vec<BiEncoding>> {
    let mut out: Vec<BiEncoding> = Vec::with_capacity(layers.len());
    for (fwd, bwd) in layers {
        let xs = out.last().map_or(inputs, |e| e.outputs.as_slice()).to_vec();
        out.push(birnn_encode(g, &xs, lengths, fwd, bwd)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::cells::{Cell, GruCell};
    use crate::nn::params::ParamStore;
    use crate::tensor::init_uniform;

    fn setup() -> (GruCell, GruCell, ParamStore) {
        let f = GruCell::new("f", 3, 4);
        let b = GruCell::new("b", 3, 4);
        let mut s = ParamStore::new();
        f.init(&mut s, 0.5, 1).unwrap();
        b.init(&mut s, 0.5, 2).unwrap();
        (f, b, s)
    }

    #[test]
    fn single_step_is_one_cell_application_each_way() {
        let (f, b, s) = setup();
        let mut g = Graph::eval(&s);
        let x = g.constant(init_uniform(&[1, 3], -1.0, 1.0, 5).unwrap());
        let enc = birnn_encode(&mut g, &[x], &[1], &f, &b).unwrap();
        let h0 = f.zero_state(&mut g, 1);
        let hf = f.step(&mut g, x, &h0).unwrap();
        let hb = b.step(&mut g, x, &h0).unwrap();
        let want = Tensor::concat(&[g.value(hf), g.value(hb)], 1).unwrap();
        assert_eq!(g.value(enc.outputs[0]), &want);
    }

    #[test]
    fn padding_does_not_change_real_positions() {
        let (f, b, s) = setup();
        let mut g = Graph::eval(&s);
        let xs: Vec<Tensor> = (0..4).map(|t| init_uniform(&[1, 3], -1.0, 1.0, 10 + t).unwrap()).collect();
        // sentence A has 4 tokens; sentence B repeats A's first 2 then padding
        let batch: Vec<Var> = (0..4)
            .map(|t| {
                let pad = if t < 2 { xs[t].clone() } else { Tensor::full(&[1, 3], 9.0) };
                g.constant(Tensor::concat(&[&xs[t], &pad], 0).unwrap())
            })
            .collect();
        let enc = birnn_encode(&mut g, &batch, &[4, 2], &f, &b).unwrap();
        let short: Vec<Var> = xs[..2].iter().map(|x| g.constant(x.clone())).collect();
        let alone = birnn_encode(&mut g, &short, &[2], &f, &b).unwrap();
        for t in 0..2 {
            let row = g.value(enc.outputs[t]).row_slice(1).to_vec();
            let want = g.value(alone.outputs[t]).row_slice(0).to_vec();
            for (a, w) in row.iter().zip(&want) {
                assert!((a - w).abs() < 1e-12);
            }
        }
        assert_eq!(g.value(enc.outputs[0]).cols(), 8);
        assert!(birnn_encode(&mut g, &[], &[], &f, &b).is_err());
    }
}
