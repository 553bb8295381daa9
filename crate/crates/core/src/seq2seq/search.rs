use std::cmp::Ordering;

use super::model::{Encoded, SourceInput, Translator};
use crate::data::vocab::{BOS, EOS};
use crate::error::{invalid_arg, Result};
use crate::nn::Graph;
use crate::tensor::{argmax, Tensor};

/// A finished or partial translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Target ids; ends with EOS when `finished`.
    pub tokens: Vec<usize>,
    /// Sum of `step_log_probs`.
    pub score: f64,
    pub step_log_probs: Vec<f64>,
    /// One attention row per emitted token.
    pub attention: Vec<Vec<f64>>,
    pub finished: bool,
}

impl Hypothesis {
    fn empty() -> Self {
        Hypothesis { tokens: Vec::new(), score: 0.0, step_log_probs: Vec::new(), attention: Vec::new(), finished: false }
    }

    fn extend(&self, token: usize, log_prob: f64, alpha: &[f64]) -> Self {
        let mut h = self.clone();
        h.tokens.push(token);
        h.score += log_prob;
        h.step_log_probs.push(log_prob);
        h.attention.push(alpha.to_vec());
        h.finished = token == EOS;
        h
    }

    /// Tokens without the closing EOS.
    pub fn output(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Next-token distribution for one hypothesis.
#[derive(Clone, Debug)]
pub struct Scored<S> {
    pub log_probs: Vec<f64>,
    pub state: S,
    pub alpha: Vec<f64>,
}

/// Incremental next-token scorer driven by the search routines.
pub trait StepScorer {
    type State: Clone;
    fn start(&mut self) -> Result<Self::State>;
    /// Scores every `(state, previous token)` pair.
    fn step(&mut self, items: &[(Self::State, usize)]) -> Result<Vec<Scored<Self::State>>>;
}

fn check(max_len: usize) -> Result<()> {
    if max_len == 0 {
        return Err(invalid_arg!("max_len must be positive"));
    }
    Ok(())
}

/// Picks the most probable token at every step (lowest id on ties) until
/// EOS or `max_len` tokens.
pub fn greedy_with<S: StepScorer>(scorer: &mut S, max_len: usize) -> Result<Hypothesis> {
    check(max_len)?;
    let mut hyp = Hypothesis::empty();
    let mut state = scorer.start()?;
    let mut prev = BOS;
    while hyp.tokens.len() < max_len && !hyp.finished {
        let out = scorer.step(&[(state, prev)])?.pop().expect("one item");
        let best = argmax(&out.log_probs);
        hyp = hyp.extend(best, out.log_probs[best], &out.alpha);
        state = out.state;
        prev = best;
    }
    Ok(hyp)
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    a.score.total_cmp(&b.score) == Ordering::Greater
}

fn best_of(hyps: impl IntoIterator<Item = Hypothesis>) -> Option<Hypothesis> {
    hyps.into_iter().fold(None, |best, h| match best {
        Some(b) if !better(&h, &b) => Some(b),
        _ => Some(h),
    })
}

/// Beam search.
///
/// Each step keeps the `beam` best extensions of the live hypotheses;
/// extensions ending in EOS move to the finished pool. Search stops when no
/// hypothesis is live, when the best finished score is at least the best
/// live score (scores only decrease), or after `max_len` tokens. Returns the
/// best finished hypothesis, or the best unfinished one if none finished.
/// Ties are broken towards earlier hypotheses and lower token ids.
pub fn beam_search_with<S: StepScorer>(scorer: &mut S, beam: usize, max_len: usize) -> Result<Hypothesis> {
    check(max_len)?;
    if beam == 0 {
        return Err(invalid_arg!("beam size must be positive"));
    }
    let mut live = vec![(Hypothesis::empty(), scorer.start()?)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let items: Vec<_> =
            live.iter().map(|(h, s)| (s.clone(), h.tokens.last().copied().unwrap_or(BOS))).collect();
        let outs = scorer.step(&items)?;
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (i, out) in outs.iter().enumerate() {
            let base = live[i].0.score;
            cands.extend(out.log_probs.iter().enumerate().map(|(v, &lp)| (base + lp, i, v)));
        }
        let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        if cands.len() > beam {
            cands.select_nth_unstable_by(beam - 1, order);
            cands.truncate(beam);
        }
        cands.sort_by(order);
        let mut next = Vec::with_capacity(beam);
        for (_, i, v) in cands {
            let out = &outs[i];
            let h = live[i].0.extend(v, out.log_probs[v], &out.alpha);
            if h.finished {
                finished.push(h);
            } else {
                next.push((h, out.state.clone()));
            }
        }
        live = next;
        let Some(best_live) = live.first().map(|(h, _)| h.score) else { break };
        if finished.iter().any(|h| h.score >= best_live) {
            break;
        }
    }
    Ok(best_of(finished).or_else(|| best_of(live.into_iter().map(|(h, _)| h))).expect("at least one hypothesis"))
}

/// Decoder state of one hypothesis: `s` and the previous context `c`.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
}

/// [`StepScorer`] for one source sentence and one model (inference mode).
pub struct ModelScorer<'m> {
    model: &'m Translator,
    states: Vec<Tensor>,
    init: Vec<f64>,
}

impl<'m> ModelScorer<'m> {
    pub fn new(model: &'m Translator, input: &SourceInput) -> Result<Self> {
        let mut g = Graph::eval(&model.store);
        let enc = model.encode(&mut g, &[input])?;
        Ok(ModelScorer {
            model,
            states: enc.states.iter().map(|&h| g.value(h).clone()).collect(),
            init: g.value(enc.init).data().to_vec(),
        })
    }

    pub fn source_len(&self) -> usize {
        self.states.len()
    }
}

fn stack(rows: impl Iterator<Item = Vec<f64>>, k: usize, width: usize) -> Result<Tensor> {
    Tensor::new(vec![k, width], rows.flatten().collect())
}

impl StepScorer for ModelScorer<'_> {
    type State = DecoderState;

    fn start(&mut self) -> Result<DecoderState> {
        Ok(DecoderState { s: self.init.clone(), c: vec![0.0; self.model.config.hidden_dim] })
    }

    fn step(&mut self, items: &[(DecoderState, usize)]) -> Result<Vec<Scored<DecoderState>>> {
        let k = items.len();
        let (d, h) = (self.model.config.decoder_dim, self.model.config.hidden_dim);
        let mut g = Graph::eval(&self.model.store);
        let states = self
            .states
            .iter()
            .map(|t| Ok(g.constant(stack((0..k).map(|_| t.data().to_vec()), k, h)?)))
            .collect::<Result<Vec<_>>>()?;
        let init = g.constant(Tensor::zeros(&[k, d]));
        let enc = Encoded { states, mask: Tensor::zeros(&[k, self.states.len()]), lengths: vec![self.states.len(); k], init };
        let s = g.constant(stack(items.iter().map(|(st, _)| st.s.clone()), k, d)?);
        let c = g.constant(stack(items.iter().map(|(st, _)| st.c.clone()), k, h)?);
        let prev: Vec<usize> = items.iter().map(|(_, y)| *y).collect();
        let out = self.model.decode_step(&mut g, &enc, &prev, c, s)?;
        let (lp, s, c, a) = (g.value(out.log_probs), g.value(out.state), g.value(out.context), g.value(out.alpha));
        Ok((0..k)
            .map(|i| Scored {
                log_probs: lp.row_slice(i).to_vec(),
                state: DecoderState { s: s.row_slice(i).to_vec(), c: c.row_slice(i).to_vec() },
                alpha: a.row_slice(i).to_vec(),
            })
            .collect())
    }
}

/// `log((1/K) Σ_k exp(lp_k))` elementwise; a single member passes through.
pub fn mean_log_probs(members: &[&[f64]]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| invalid_arg!("empty ensemble"))?;
    if members.len() == 1 {
        return Ok(first.to_vec());
    }
    if members.iter().any(|m| m.len() != first.len()) {
        return Err(invalid_arg!("ensemble members disagree on the vocabulary size"));
    }
    let k = members.len() as f64;
    Ok((0..first.len())
        .map(|v| {
            let hi = members.iter().map(|m| m[v]).fold(f64::NEG_INFINITY, f64::max);
            if hi == f64::NEG_INFINITY {
                return hi;
            }
            hi + (members.iter().map(|m| (m[v] - hi).exp()).sum::<f64>() / k).ln()
        })
        .collect())
}

/// Averages the next-token probabilities of several scorers. Attention is
/// reported from the first member.
pub struct EnsembleScorer<S> {
    pub members: Vec<S>,
}

impl<S: StepScorer> StepScorer for EnsembleScorer<S> {
    type State = Vec<S::State>;

    fn start(&mut self) -> Result<Self::State> {
        if self.members.is_empty() {
            return Err(invalid_arg!("empty ensemble"));
        }
        self.members.iter_mut().map(|m| m.start()).collect()
    }

    fn step(&mut self, items: &[(Self::State, usize)]) -> Result<Vec<Scored<Self::State>>> {
        let per_member = self
            .members
            .iter_mut()
            .enumerate()
            .map(|(k, m)| {
                let sub: Vec<_> = items.iter().map(|(st, y)| (st[k].clone(), *y)).collect();
                m.step(&sub)
            })
            .collect::<Result<Vec<_>>>()?;
        (0..items.len())
            .map(|i| {
                let lps: Vec<&[f64]> = per_member.iter().map(|m| m[i].log_probs.as_slice()).collect();
                Ok(Scored {
                    log_probs: mean_log_probs(&lps)?,
                    state: per_member.iter().map(|m| m[i].state.clone()).collect(),
                    alpha: per_member[0][i].alpha.clone(),
                })
            })
            .collect()
    }
}

impl Translator {
    pub fn greedy(&self, input: &SourceInput, max_len: usize) -> Result<Hypothesis> {
        greedy_with(&mut ModelScorer::new(self, input)?, max_len)
    }

    pub fn beam_search(&self, input: &SourceInput, beam: usize, max_len: usize) -> Result<Hypothesis> {
        beam_search_with(&mut ModelScorer::new(self, input)?, beam, max_len)
    }
}

/// Beam search over an ensemble; each model reads its own prepared input.
pub fn ensemble_decode(members: &[(&Translator, &SourceInput)], beam: usize, max_len: usize) -> Result<Hypothesis> {
    let first = members.first().ok_or_else(|| invalid_arg!("empty ensemble"))?;
    if members.iter().any(|(m, _)| m.tgt_vocab != first.0.tgt_vocab) {
        return Err(invalid_arg!("ensemble members must share the target vocabulary"));
    }
    let scorers = members.iter().map(|(m, i)| ModelScorer::new(m, i)).collect::<Result<Vec<_>>>()?;
    beam_search_with(&mut EnsembleScorer { members: scorers }, beam, max_len)
}
