use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::conll::Sentence;
use super::model::{Parser, ParserConfig};
use super::tree::DependencyTree;
use crate::data::vocab::Vocabulary;
use crate::error::{invalid_arg, Result};
use crate::nn::{clip_gradients, AdamState, Graph, Trainable};
use crate::rng;

/// What to do with gold trees that are not projective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonProjective {
    #[default]
    Projectivize,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParserTrainConfig {
    pub model: ParserConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    pub vocab_size: usize,
    pub seed: u64,
    pub non_projective: NonProjective,
}

impl Default for ParserTrainConfig {
    fn default() -> Self {
        ParserTrainConfig {
            model: ParserConfig::default(),
            epochs: 30,
            batch_size: 32,
            lr: 2e-3,
            clip: 5.0,
            vocab_size: 50_000,
            seed: 1,
            non_projective: NonProjective::Projectivize,
        }
    }
}

/// Per-epoch mean token loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParserTrace {
    pub epoch_loss: Vec<f64>,
    pub skipped: usize,
    pub projectivized: usize,
}

/// Collapses extra roots and applies the non-projective policy. Returns
/// `None` for a sentence to skip and whether the tree was lifted.
pub fn prepare_tree(tree: &DependencyTree, policy: NonProjective) -> (Option<DependencyTree>, bool) {
    let mut t = tree.clone();
    t.normalize_roots();
    if t.is_projective() {
        return (Some(t), false);
    }
    match policy {
        NonProjective::Skip => (None, false),
        NonProjective::Projectivize => {
            t.projectivize();
            (Some(t), true)
        }
    }
}

struct Example {
    words: Vec<usize>,
    heads: Vec<usize>,
    labels: Vec<usize>,
}

/// Trains a parser with per-dependent head cross-entropy plus label
/// cross-entropy, Adam and global-norm clipping. `on_epoch` sees the epoch
/// index and the model after each epoch.
pub fn train_parser_with<F>(
    treebank: &[Sentence],
    config: &ParserTrainConfig,
    mut on_epoch: F,
) -> Result<(Parser, ParserTrace)>
where
    F: FnMut(usize, f64, &Parser) -> Result<()>,
{
    if treebank.is_empty() {
        return Err(invalid_arg!("cannot train a parser on an empty treebank"));
    }
    if config.batch_size == 0 {
        return Err(invalid_arg!("batch_size must be positive"));
    }
    let mut trace = ParserTrace::default();
    let mut kept: Vec<(&Sentence, DependencyTree)> = Vec::new();
    for s in treebank {
        match prepare_tree(&s.tree, config.non_projective) {
            (Some(t), lifted) => {
                trace.projectivized += lifted as usize;
                kept.push((s, t));
            }
            (None, _) => trace.skipped += 1,
        }
    }
    if kept.is_empty() {
        return Err(invalid_arg!("every training tree was skipped as non-projective"));
    }
    let words = Vocabulary::build(kept.iter().map(|(s, _)| &s.tokens), config.vocab_size)?;
    let mut labels: Vec<String> = kept.iter().flat_map(|(_, t)| t.labels().iter().cloned()).collect();
    labels.sort();
    labels.dedup();
    let mut parser = Parser::new(config.model.clone(), words, labels, config.seed)?;
    let examples: Vec<Example> = kept
        .iter()
        .map(|(s, t)| Example {
            words: parser.word_ids(&s.tokens),
            heads: t.heads().to_vec(),
            labels: t.labels().iter().map(|l| parser.label_id(l).expect("collected above")).collect(),
        })
        .collect();

    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, "parser-shuffle"));
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, n) = parser_step(&mut parser, &batch, &mut adam, config)?;
            total += loss * n as f64;
            tokens += n;
        }
        let mean = total / tokens as f64;
        trace.epoch_loss.push(mean);
        log::info!("parser epoch {} loss {mean:.4}", epoch + 1);
        on_epoch(epoch, mean, &parser)?;
    }
    Ok((parser, trace))
}

pub fn train_parser(treebank: &[Sentence], config: &ParserTrainConfig) -> Result<(Parser, ParserTrace)> {
    train_parser_with(treebank, config, |_, _, _| Ok(()))
}

fn parser_step(
    parser: &mut Parser,
    batch: &[&Example],
    adam: &mut AdamState,
    config: &ParserTrainConfig,
) -> Result<(f64, usize)> {
    let tokens: usize = batch.iter().map(|e| e.words.len()).sum();
    let grads = {
        let mut g = Graph::new(&parser.store, Trainable::All, true, 0);
        let ids: Vec<Vec<usize>> = batch.iter().map(|e| e.words.clone()).collect();
        let encs = parser.net.encode_batch(&mut g, &ids)?;
        let mut losses = Vec::with_capacity(batch.len());
        for (o, e) in encs.into_iter().zip(batch) {
            losses.push(parser.net.loss(&mut g, o, &e.heads, &e.labels)?);
        }
        let all = g.concat(&losses, 0)?;
        let sum = g.sum(all);
        let loss = g.scale(sum, 1.0 / tokens as f64);
        g.backward(loss)?;
        let value = g.value(loss).data()[0];
        let mut grads = g.gradients();
        clip_gradients(&mut grads, config.clip)?;
        (grads, value)
    };
    let (grads, value) = grads;
    adam.step(&mut parser.store, &grads, config.lr)?;
    Ok((value, tokens))
}

/// Token-level attachment scores `(UAS, LAS)`.
pub fn evaluate_las(pred: &[DependencyTree], gold: &[DependencyTree]) -> Result<(f64, f64)> {
    if pred.len() != gold.len() {
        return Err(invalid_arg!("{} predicted trees for {} gold trees", pred.len(), gold.len()));
    }
    let (mut total, mut heads, mut labeled) = (0usize, 0usize, 0usize);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(invalid_arg!("sentence {i}: {} predicted tokens for {} gold", p.len(), g.len()));
        }
        for d in 1..=g.len() {
            total += 1;
            if p.head(d) == g.head(d) {
                heads += 1;
                if p.label(d) == g.label(d) {
                    labeled += 1;
                }
            }
        }
    }
    if total == 0 {
        return Ok((1.0, 1.0));
    }
    Ok((heads as f64 / total as f64, labeled as f64 / total as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(heads: &[usize], labels: &[&str]) -> DependencyTree {
        DependencyTree::new(heads.to_vec(), labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn las_cases() {
        let g = tree(&[2, 0, 2], &["a", "root", "b"]);
        assert_eq!(evaluate_las(std::slice::from_ref(&g), std::slice::from_ref(&g)).unwrap(), (1.0, 1.0));
        let relabeled = tree(&[2, 0, 2], &["x", "x", "x"]);
        assert_eq!(evaluate_las(&[relabeled], std::slice::from_ref(&g)).unwrap(), (1.0, 0.0));
        assert!(evaluate_las(&[], &[g]).is_err());
    }

    #[test]
    fn ten_token_hand_count() {
        let gold = tree(&[0, 1, 1, 3, 3, 1, 6, 6, 1, 9], &["l"; 10]);
        // heads wrong at tokens 2, 5, 8; labels wrong at 4 and 7
        let mut labels = vec!["l"; 10];
        labels[3] = "m";
        labels[6] = "m";
        let pred = tree(&[0, 3, 1, 3, 1, 1, 6, 7, 1, 9], &labels);
        assert_eq!(evaluate_las(&[pred], &[gold]).unwrap(), (0.7, 0.5));
    }

    #[test]
    fn policies() {
        let nonproj = tree(&[0, 4, 1, 1], &["r", "a", "b", "c"]);
        assert!(prepare_tree(&nonproj, NonProjective::Skip).0.is_none());
        let (t, lifted) = prepare_tree(&nonproj, NonProjective::Projectivize);
        assert!(lifted && t.unwrap().is_projective());
    }

    #[test]
    fn empty_treebank_is_rejected() {
        assert!(train_parser(&[], &ParserTrainConfig::default()).is_err());
    }
}
