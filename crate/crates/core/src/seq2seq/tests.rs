use std::sync::Arc;

use super::*;
use crate::data::bpe::BpeModel;
use crate::data::vocab::{Vocabulary, EOS};
use crate::depparse::{Parser, ParserConfig};
use crate::nn::{grad_check_params, AdamState, Graph};
use crate::tensor::{init_uniform, Tensor};
use crate::toy;

pub(crate) fn tiny_config(mode: SyntaxMode) -> ModelConfig {
    ModelConfig {
        mode,
        embed_dim: 4,
        hidden_dim: 6,
        decoder_dim: 5,
        output_dim: 5,
        sawr_dim: 3,
        sawr_layers: Default::default(),
        tree_dim: 3,
        dropout: 0.0,
        init_range: 0.3,
    }
}

pub(crate) fn tiny_parser(words: &Vocabulary) -> Parser {
    let cfg = ParserConfig { embed_dim: 3, hidden_dim: 2, layers: 1, arc_mlp: 3, label_mlp: 2, init_range: 0.3 };
    Parser::new(cfg, words.clone(), vec!["nsubj".into(), "obj".into()], 7).unwrap()
}

fn vocab(words: &[&str]) -> Vocabulary {
    Vocabulary::from_tokens(words.iter().map(|s| s.to_string()))
}

pub(crate) fn tiny_model(mode: SyntaxMode, seed: u64) -> Translator {
    let src = vocab(&["a", "b", "c", "d", "(root", "(nsubj", "(obj", ")"]);
    let tgt = vocab(&["x", "y", "z"]);
    let parser = tiny_parser(&vocab(&["a", "b", "c", "d"]));
    let with = (mode == SyntaxMode::Sawr).then_some(&parser);
    Translator::new(tiny_config(mode), src, tgt, with, seed).unwrap()
}

pub(crate) fn tree3() -> crate::depparse::DependencyTree {
    crate::depparse::DependencyTree::new(vec![2, 0, 2], vec!["nsubj".into(), "root".into(), "obj".into()]).unwrap()
}

fn input(m: &Translator, words: &[&str]) -> SourceInput {
    let tree = if words.len() == 3 { Some(tree3()) } else { Some(chain(words.len())) };
    m.source_input(words, tree.as_ref(), None).unwrap()
}

fn chain(n: usize) -> crate::depparse::DependencyTree {
    let heads = (0..n).collect();
    crate::depparse::DependencyTree::new(heads, vec!["nsubj".into(); n]).unwrap()
}

const MODES: [SyntaxMode; 4] = [SyntaxMode::None, SyntaxMode::Sawr, SyntaxMode::TreeRnn, SyntaxMode::TreeLinearized];

#[test]
fn attention_closed_forms() {
    let store = crate::nn::ParamStore::new();
    let mut g = Graph::eval(&store);
    let h: Vec<_> = (0..3).map(|k| g.constant(init_uniform(&[1, 4], -1.0, 1.0, k).unwrap())).collect();
    let s = g.constant(init_uniform(&[1, 2], -1.0, 1.0, 9).unwrap());
    let w0 = g.constant(Tensor::zeros(&[2, 4]));
    let (c, a) = attend(&mut g, s, &h, &Tensor::zeros(&[1, 3]), w0).unwrap();
    for &x in g.value(a).data() {
        assert!((x - 1.0 / 3.0).abs() < 1e-12);
    }
    for j in 0..4 {
        let mean = h.iter().map(|&v| g.value(v).data()[j]).sum::<f64>() / 3.0;
        assert!((g.value(c).data()[j] - mean).abs() < 1e-12);
    }

    let w = g.constant(init_uniform(&[2, 4], -1.0, 1.0, 4).unwrap());
    let (c, a) = attend(&mut g, s, &h[..1], &Tensor::zeros(&[1, 1]), w).unwrap();
    assert_eq!(g.value(a).data(), &[1.0]);
    assert_eq!(g.value(c), g.value(h[0]));

    // s = [1], W = [1], h = [0], [ln 3]  =>  β = [ln 1, ln 3]
    let s = g.constant(Tensor::row(vec![1.0]));
    let w = g.constant(Tensor::row(vec![1.0]));
    let h2 = [g.constant(Tensor::row(vec![0.0])), g.constant(Tensor::row(vec![3f64.ln()]))];
    let (_, a) = attend(&mut g, s, &h2, &Tensor::zeros(&[1, 2]), w).unwrap();
    let a = g.value(a).data();
    assert!((a[0] - 0.25).abs() < 1e-12 && (a[1] - 0.75).abs() < 1e-12);

    let bad = g.constant(Tensor::zeros(&[3, 4]));
    assert!(attend(&mut g, s, &h, &Tensor::zeros(&[1, 3]), bad).is_err());
    assert!(attend(&mut g, s, &[], &Tensor::zeros(&[1, 0]), w).is_err());
}

#[test]
fn padded_source_positions_get_no_attention() {
    let m = tiny_model(SyntaxMode::None, 3);
    let (long, short) = (input(&m, &["a", "b", "c", "d"]), input(&m, &["c", "a"]));
    let mut g = Graph::eval(&m.store);
    let enc = m.encode(&mut g, &[&long, &short]).unwrap();
    let c0 = m.initial_context(&mut g, 2);
    let step = m.decode_step(&mut g, &enc, &[crate::data::BOS; 2], c0, enc.init).unwrap();
    let a = g.value(step.alpha);
    assert_eq!(a.shape(), &[2, 4]);
    assert!(a.row_slice(1)[2..].iter().all(|&x| x == 0.0));

    let mut g2 = Graph::eval(&m.store);
    let alone = m.encode(&mut g2, &[&short]).unwrap();
    let c0 = m.initial_context(&mut g2, 1);
    let s2 = m.decode_step(&mut g2, &alone, &[crate::data::BOS], c0, alone.init).unwrap();
    let (x, y) = (g.value(step.log_probs).row_slice(1), g2.value(s2.log_probs).row_slice(0));
    for (p, q) in x.iter().zip(y) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn encoder_shapes_and_distribution() {
    for mode in MODES {
        let m = tiny_model(mode, 1);
        let inp = input(&m, &["a", "b", "c"]);
        let mut g = Graph::eval(&m.store);
        let enc = m.encode(&mut g, &[&inp]).unwrap();
        let expect = if mode == SyntaxMode::TreeLinearized { inp.len() } else { 3 };
        assert_eq!(enc.states.len(), expect, "{mode:?}");
        assert_eq!(g.value(enc.states[0]).shape(), &[1, 6]);
        let c0 = m.initial_context(&mut g, 1);
        let step = m.decode_step(&mut g, &enc, &[crate::data::BOS], c0, enc.init).unwrap();
        let p: f64 = g.value(step.log_probs).data().iter().map(|l| l.exp()).sum();
        assert!((p - 1.0).abs() < 1e-9);
        let a: f64 = g.value(step.alpha).data().iter().sum();
        assert!((a - 1.0).abs() < 1e-9);
        assert!(m.decode_step(&mut g, &enc, &[99], c0, enc.init).is_err());
    }
}

#[test]
fn source_preparation() {
    let m = tiny_model(SyntaxMode::TreeLinearized, 1);
    let inp = m.source_input(&["b", "a", "c"], Some(&tree3()), None).unwrap();
    let syms = m.src_vocab.decode(&inp.ids);
    assert_eq!(syms.join(" "), "(root (nsubj b ) a (obj c ) )");
    assert!(m.source_input(&["a"], None, None).is_err());

    let bpe = BpeModel::from_merges(vec![]);
    let rnn = tiny_model(SyntaxMode::TreeRnn, 1);
    assert!(rnn.source_input(&["a", "b", "c"], Some(&tree3()), Some(&bpe)).is_err());
    assert!(rnn.source_input(&["a", "b"], Some(&tree3()), None).is_err());

    let sawr = tiny_model(SyntaxMode::Sawr, 1);
    let inp = sawr.source_input(&["ab", "c"], None, Some(&bpe)).unwrap();
    assert_eq!(inp.word_of, vec![Some(0), None, Some(1)]);
    assert_eq!(inp.parser_ids.len(), 2);
    let mut g = Graph::eval(&sawr.store);
    assert_eq!(sawr.encode(&mut g, &[&inp]).unwrap().states.len(), 3);
    assert!(m.source_input::<&str>(&[], None, None).is_err());
}

#[test]
fn parser_switch_only_in_sawr_mode() {
    let mut m = tiny_model(SyntaxMode::None, 1);
    assert!(matches!(m.set_parser_trainable(true), Err(crate::Error::InvalidState(_))));
    let mut s = tiny_model(SyntaxMode::Sawr, 1);
    assert!(s.set_parser_trainable(true).is_ok());
    assert!(s.parser_trainable());
    assert!(Translator::new(tiny_config(SyntaxMode::Sawr), s.src_vocab.clone(), s.tgt_vocab.clone(), None, 1).is_err());
    let mut odd = tiny_config(SyntaxMode::None);
    odd.hidden_dim = 5;
    assert!(odd.validate().is_err());
}

#[test]
fn cached_and_live_sawr_agree() {
    let m = tiny_model(SyntaxMode::Sawr, 2);
    let mut inp = input(&m, &["a", "d", "c"]);
    let live = m.greedy(&inp, 6).unwrap();
    inp.sawr = Some(Arc::new(m.parser_encodings(&[&inp]).unwrap().remove(0)));
    assert_eq!(m.greedy(&inp, 6).unwrap(), live);
}

#[test]
fn sawr_from_all_parser_layers() {
    let src = vocab(&["a", "b", "c"]);
    let words = vocab(&["a", "b", "c"]);
    let cfg = ParserConfig { embed_dim: 3, hidden_dim: 2, layers: 2, arc_mlp: 3, label_mlp: 2, init_range: 0.3 };
    let parser = Parser::new(cfg, words, vec!["dep".into()], 1).unwrap();
    let mut mc = tiny_config(SyntaxMode::Sawr);
    mc.sawr_layers = crate::depparse::EncoderLayers::All;
    let m = Translator::new(mc, src.clone(), src, Some(&parser), 2).unwrap();
    assert_eq!(m.store.get("sawr.proj.W").unwrap().shape(), &[8, 3]);
    let inp = m.source_input(&["a", "c"], None, None).unwrap();
    let enc = m.parser_encodings(&[&inp]).unwrap();
    assert_eq!(enc[0].shape(), &[2, 8]);
    let top = parser.encode(&["a", "c"]).unwrap();
    assert_eq!(enc[0].slice(1, 4, 4).unwrap(), top);
    assert!(m.greedy(&inp, 4).is_ok());
}

#[test]
fn initial_loss_near_log_vocab() {
    let mut cfg = tiny_config(SyntaxMode::None);
    cfg.init_range = 0.01;
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let v = Vocabulary::from_tokens(words.clone());
    let m = Translator::new(cfg, v.clone(), v.clone(), None, 5).unwrap();
    let src = m.source_input(&words[..5], None, None).unwrap();
    let tgt = v.encode(&words[5..12]);
    let loss = batch_loss(&m, &[&src], &[tgt]).unwrap();
    let want = (v.len() as f64).ln();
    assert!((loss - want).abs() < 0.1 * want, "{loss} vs {want}");
}

#[test]
fn padding_masked_out_of_loss() {
    let m = tiny_model(SyntaxMode::None, 4);
    let (a, b) = (input(&m, &["a", "b", "c"]), input(&m, &["d"]));
    let (ta, tb) = (vec![4, 5, 6, 4], vec![6]);
    let both = batch_loss(&m, &[&a, &b], &[ta.clone(), tb.clone()]).unwrap();
    let la = batch_loss(&m, &[&a], std::slice::from_ref(&ta)).unwrap() * 5.0;
    let lb = batch_loss(&m, &[&b], &[tb]).unwrap() * 2.0;
    assert!((both - (la + lb) / 7.0).abs() < 1e-12);
}

#[test]
fn loss_decreases_on_a_repeated_batch() {
    for mode in MODES {
        let mut m = tiny_model(mode, 6);
        let (a, b) = (input(&m, &["a", "b", "c"]), input(&m, &["d", "c", "a"]));
        let targets = vec![vec![4, 5, 6], vec![6, 6]];
        let mut adam = AdamState::new();
        let mut last = f64::INFINITY;
        for step in 0..20 {
            let before = batch_loss(&m, &[&a, &b], &targets).unwrap();
            let l = train_step(&mut m, &[&a, &b], &targets, &mut adam, 0.02, 5.0, step).unwrap();
            assert!((l - before).abs() < 1e-12);
            assert!(l < last, "{mode:?} step {step}: {l} >= {last}");
            last = l;
        }
    }
}

#[test]
fn frozen_parser_is_untouched_and_tuned_parser_moves() {
    for tuned in [false, true] {
        let mut m = tiny_model(SyntaxMode::Sawr, 8);
        m.set_parser_trainable(tuned).unwrap();
        let before = m.store.bytes_with_prefix(PARSER_PREFIX);
        let other = m.store.bytes_with_prefix("sawr.");
        let inp = input(&m, &["a", "b", "c"]);
        let mut adam = AdamState::new();
        train_step(&mut m, &[&inp], &[vec![4, 5]], &mut adam, 0.01, 5.0, 0).unwrap();
        assert_eq!(m.store.bytes_with_prefix(PARSER_PREFIX) == before, !tuned);
        assert_ne!(m.store.bytes_with_prefix("sawr."), other);
    }
}

#[test]
fn full_pipeline_gradients() {
    for mode in MODES {
        let mut m = tiny_model(mode, 11);
        if mode == SyntaxMode::Sawr {
            m.set_parser_trainable(true).unwrap();
        }
        let (a, b) = (input(&m, &["a", "b", "c"]), input(&m, &["c", "d"]));
        let targets = vec![vec![4, 6], vec![5, 5, 4]];
        let err = grad_check_params(
            &m.store,
            &m.trainable(),
            |g| {
                let (nll, n) = m.nll(g, &[&a, &b], &targets)?;
                Ok(g.scale(nll, 1.0 / n as f64))
            },
            1e-3,
            6,
            3,
        )
        .unwrap();
        assert!(err < 1e-4, "{mode:?}: {err}");
    }
}

#[test]
fn checkpoint_round_trip() {
    for mode in MODES {
        let mut m = tiny_model(mode, 12);
        if mode == SyntaxMode::Sawr {
            m.set_parser_trainable(true).unwrap();
        }
        m.annotations.insert("note".into(), "a b\nc".into());
        let back = Translator::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.annotations, m.annotations);
        assert_eq!(back.parser_trainable(), m.parser_trainable());
        let inp = input(&m, &["a", "b", "c"]);
        assert_eq!(back.beam_search(&inp, 3, 5).unwrap(), m.beam_search(&inp, 3, 5).unwrap());
    }
    let p = tiny_parser(&vocab(&["a"]));
    assert!(Translator::from_bytes(&p.to_bytes()).is_err());
    let m = tiny_model(SyntaxMode::Sawr, 1);
    let extracted = m.extract_parser().unwrap();
    assert_eq!(extracted.store.len(), p.store.len());
}

struct Table {
    /// log-probs indexed by the token prefix.
    rows: std::collections::HashMap<Vec<usize>, Vec<f64>>,
    vocab: usize,
    seed: u64,
}

impl Table {
    fn dist(&mut self, prefix: &[usize]) -> Vec<f64> {
        let (v, seed) = (self.vocab, self.seed);
        self.rows
            .entry(prefix.to_vec())
            .or_insert_with(|| {
                let label = format!("{prefix:?}");
                let t = init_uniform(&[1, v], -3.0, 3.0, crate::rng::derive_seed(seed, &label)).unwrap();
                t.log_softmax(1).unwrap().into_data()
            })
            .clone()
    }
}

/// Tracks the emitted prefix in the state, since `Table` keys on it.
struct Tracked(Table);

impl StepScorer for Tracked {
    /// Prefix before the previous token; `None` at the start.
    type State = Option<Vec<usize>>;
    fn start(&mut self) -> crate::Result<Self::State> {
        Ok(None)
    }
    fn step(&mut self, items: &[(Self::State, usize)]) -> crate::Result<Vec<Scored<Self::State>>> {
        Ok(items
            .iter()
            .map(|(prefix, prev)| {
                let p = match prefix {
                    None => vec![],
                    Some(p) => [p.as_slice(), &[*prev]].concat(),
                };
                Scored { log_probs: self.0.dist(&p), state: Some(p), alpha: vec![1.0] }
            })
            .collect())
    }
}

fn exhaustive(t: &mut Table, max_len: usize) -> f64 {
    fn go(t: &mut Table, prefix: &mut Vec<usize>, score: f64, max_len: usize, best: &mut f64) {
        let lp = t.dist(prefix);
        for (v, &l) in lp.iter().enumerate() {
            if v == EOS {
                *best = best.max(score + l);
            } else if prefix.len() + 1 < max_len {
                prefix.push(v);
                go(t, prefix, score + l, max_len, best);
                prefix.pop();
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(t, &mut vec![], 0.0, max_len, &mut best);
    best
}

#[test]
fn beam_search_matches_enumeration_and_greedy() {
    for seed in 0..30 {
        let table = || Table { rows: Default::default(), vocab: 4, seed };
        let mut t = Tracked(table());
        let h = beam_search_with(&mut t, 64, 3).unwrap();
        let want = exhaustive(&mut table(), 3);
        assert!((h.score - want).abs() < 1e-12, "seed {seed}");
        assert_eq!(h.score, h.step_log_probs.iter().sum::<f64>());
        assert!(h.finished);

        let g = greedy_with(&mut Tracked(table()), 3).unwrap();
        assert_eq!(beam_search_with(&mut Tracked(table()), 1, 3).unwrap(), g);

    }
}

#[test]
fn wider_beams_never_exceed_the_optimum() {
    // Wider beams can score lower than narrower ones; only the bound holds.
    for seed in 0..200 {
        let table = || Table { rows: Default::default(), vocab: 5, seed };
        let best = exhaustive(&mut table(), 4);
        for b in 1..=6 {
            let h = beam_search_with(&mut Tracked(table()), b, 4).unwrap();
            if h.finished {
                assert!(h.score <= best + 1e-12);
            }
        }
        let full = beam_search_with(&mut Tracked(table()), 5usize.pow(4), 4).unwrap();
        assert!((full.score - best).abs() < 1e-12);
    }
}

#[test]
fn search_argument_errors() {
    let m = tiny_model(SyntaxMode::None, 1);
    let inp = input(&m, &["a"]);
    assert!(m.beam_search(&inp, 0, 5).is_err());
    assert!(m.beam_search(&inp, 2, 0).is_err());
    assert!(m.greedy(&SourceInput::default(), 5).is_err());
}

#[test]
fn model_beam_one_is_greedy_and_rows_normalized() {
    for mode in MODES {
        let m = tiny_model(mode, 13);
        let inp = input(&m, &["b", "c", "a"]);
        let g = m.greedy(&inp, 8).unwrap();
        assert_eq!(m.beam_search(&inp, 1, 8).unwrap(), g);
        let b = m.beam_search(&inp, 4, 8).unwrap();
        assert_eq!(b.score, b.step_log_probs.iter().sum::<f64>());
        for row in &b.attention {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}

#[test]
fn ensemble_reductions() {
    let m = tiny_model(SyntaxMode::None, 14);
    let inp = input(&m, &["a", "c"]);
    let single = m.beam_search(&inp, 3, 6).unwrap();
    assert_eq!(ensemble_decode(&[(&m, &inp)], 3, 6).unwrap(), single);
    let three = ensemble_decode(&[(&m, &inp), (&m, &inp), (&m, &inp)], 3, 6).unwrap();
    assert_eq!(three, single);

    let lin = tiny_model(SyntaxMode::TreeLinearized, 15);
    let rnn = tiny_model(SyntaxMode::TreeRnn, 16);
    let (il, ir) = (input(&lin, &["a", "b", "c"]), input(&rnn, &["a", "b", "c"]));
    let i0 = input(&m, &["a", "b", "c"]);
    let h = ensemble_decode(&[(&m, &i0), (&lin, &il), (&rnn, &ir)], 3, 6).unwrap();
    assert!(!h.tokens.is_empty());

    let p = [0.2f64.ln(), 0.8f64.ln()];
    let q = [0.6f64.ln(), 0.4f64.ln()];
    let mean = mean_log_probs(&[&p, &q]).unwrap();
    assert!((mean[0].exp() - 0.4).abs() < 1e-12 && (mean[1].exp() - 0.6).abs() < 1e-12);
    assert!(mean_log_probs(&[]).is_err());
}

#[test]
fn toy_corpus_batches_train() {
    let pairs = toy::parallel_corpus(12, 1);
    let src = Vocabulary::build(pairs.iter().map(|p| &p.source), 100).unwrap();
    let tgt = Vocabulary::build(pairs.iter().map(|p| &p.target), 100).unwrap();
    let mut m = Translator::new(tiny_config(SyntaxMode::None), src, tgt, None, 1).unwrap();
    let sources: Vec<SourceInput> = pairs.iter().map(|p| m.source_input(&p.source, None, None).unwrap()).collect();
    let targets: Vec<Vec<usize>> = pairs.iter().map(|p| m.tgt_vocab.encode(&p.target)).collect();
    let ids: Vec<(Vec<usize>, Vec<usize>)> =
        sources.iter().zip(&targets).map(|(s, t)| (s.ids.clone(), t.clone())).collect();
    let cfg = TrainConfig { batch_size: 4, lr: 0.01, ..TrainConfig::default() };
    let batches = crate::data::filter_and_batch(&ids, 50, 150, 4, 1).unwrap();
    let mut adam = AdamState::new();
    let mut step = 0;
    let first = train_epoch(&mut m, &sources, &targets, &batches, &mut adam, &cfg, &mut step).unwrap();
    let second = train_epoch(&mut m, &sources, &targets, &batches, &mut adam, &cfg, &mut step).unwrap();
    assert_eq!(step, 2 * batches.len() as u64);
    assert!(second < first);
}

