//! Property tests for invariants that must hold on arbitrary inputs.

use proptest::prelude::*;
use proptest::sample::Index;

use sawr::data::{decode_bpe, delinearize, filter_and_batch, learn_bpe, linearize, word_counts, Vocabulary};
use sawr::depparse::{decode_projective, read_treebank, tree_score, write_treebank, ArcScores, DependencyTree, Sentence};
use sawr::eval::bleu;
use sawr::nn::{clip_gradients, global_norm, Gradients, Graph, ParamStore};
use sawr::syntax::TreeGru;
use sawr::tensor::{init_uniform, Tensor};

const LABELS: [&str; 4] = ["nsubj", "obj", "det", "amod"];

/// Words that do not end in the continuation marker (those cannot
/// round-trip through segmentation).
fn word() -> impl Strategy<Value = String> {
    "[a-zäöé@]{1,9}".prop_filter("ends in marker", |w| !w.ends_with("@@"))
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 1..12)
}

/// Any single-rooted tree: tokens attach, in a shuffled order, to a token
/// placed earlier in that order.
fn any_tree() -> impl Strategy<Value = DependencyTree> {
    (1usize..=12)
        .prop_flat_map(|n| {
            let order = Just((1..=n).collect::<Vec<_>>()).prop_shuffle();
            (order, prop::collection::vec(any::<Index>(), n))
        })
        .prop_map(|(order, picks)| {
            let mut heads = vec![0; order.len()];
            for k in 1..order.len() {
                heads[order[k] - 1] = order[picks[k].index(k)];
            }
            DependencyTree::unlabeled(heads, "dep").unwrap()
        })
}

/// Projective trees: each span picks its head, then both sides recurse.
fn projective_tree() -> impl Strategy<Value = DependencyTree> {
    (1usize..=14)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(any::<Index>(), 2 * n)))
        .prop_map(|(n, picks)| {
            fn span(lo: usize, hi: usize, head: usize, heads: &mut [usize], picks: &mut impl Iterator<Item = Index>) {
                if lo > hi {
                    return;
                }
                let h = lo + picks.next().unwrap().index(hi - lo + 1);
                heads[h - 1] = head;
                span(lo, h - 1, h, heads, picks);
                span(h + 1, hi, h, heads, picks);
            }
            let mut heads = vec![0; n];
            let mut it = picks.clone().into_iter();
            span(1, n, 0, &mut heads, &mut it);
            let labels = picks[n..].iter().map(|i| LABELS[i.index(LABELS.len())].to_string()).collect();
            DependencyTree::new(heads, labels).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bpe_segmentation_is_lossless(corpus in prop::collection::vec(sentence(), 1..20), merges in 0usize..80, probe in sentence()) {
        let model = learn_bpe(&word_counts(&corpus), merges);
        for s in corpus.iter().chain(std::iter::once(&probe)) {
            prop_assert_eq!(&decode_bpe(&model.apply(s)), s);
        }
    }

    #[test]
    fn bpe_merges_are_distinct_and_bounded(corpus in prop::collection::vec(sentence(), 1..20), merges in 0usize..80) {
        let model = learn_bpe(&word_counts(&corpus), merges);
        prop_assert!(model.merges().len() <= merges);
        let mut seen = std::collections::HashSet::new();
        for m in model.merges() {
            prop_assert!(seen.insert(m.clone()), "duplicate merge {:?}", m);
        }
    }

    #[test]
    fn linearization_round_trips(tree in projective_tree(), seed in any::<u64>()) {
        let words: Vec<String> = (0..tree.len()).map(|i| format!("w{}", (seed >> (i % 60)) % 7)).collect();
        let symbols = linearize(&words, &tree).unwrap();
        let brackets = symbols.iter().filter(|s| s.starts_with('(')).count();
        prop_assert_eq!(brackets, symbols.iter().filter(|s| *s == ")").count());
        let (w, t) = delinearize(&symbols).unwrap();
        prop_assert_eq!(w, words);
        prop_assert_eq!(t, tree);
    }

    #[test]
    fn projectivize_yields_projective_single_root(tree in any_tree()) {
        let mut t = tree.clone();
        t.projectivize();
        prop_assert!(t.is_projective());
        prop_assert_eq!(t.roots().len(), 1);
        prop_assert_eq!(t.len(), tree.len());
    }

    #[test]
    fn projective_decoding_beats_any_projective_tree(n in 1usize..8, seed in any::<u64>(), other in projective_tree()) {
        let arcs = init_uniform(&[n + 1, n], -3.0, 3.0, seed).unwrap();
        let best = decode_projective(&ArcScores::new(arcs.clone()).unwrap()).unwrap();
        prop_assert!(best.is_projective());
        prop_assert_eq!(best.roots().len(), 1);
        if other.len() == n {
            prop_assert!(tree_score(&arcs, best.heads()) >= tree_score(&arcs, other.heads()) - 1e-12);
        }
    }

    #[test]
    fn treebank_text_round_trips(trees in prop::collection::vec(any_tree(), 1..5)) {
        let bank: Vec<Sentence> = trees
            .into_iter()
            .map(|tree| Sentence { tokens: (0..tree.len()).map(|i| format!("t{i}")).collect(), tree })
            .collect();
        let mut buf = Vec::new();
        write_treebank(&mut buf, &bank).unwrap();
        prop_assert_eq!(read_treebank(&buf[..]).unwrap(), bank);
    }

    #[test]
    fn tree_gru_is_batch_invariant(trees in prop::collection::vec(any_tree(), 1..6), seed in any::<u64>()) {
        let tg = TreeGru::new("t", 3, 2);
        let mut store = ParamStore::new();
        tg.init(&mut store, 0.5, seed).unwrap();
        let total: usize = trees.iter().map(DependencyTree::len).sum();
        let x = init_uniform(&[total, 3], -1.0, 1.0, seed ^ 1).unwrap();
        let mut g = Graph::eval(&store);
        let xv = g.constant(x.clone());
        let out = tg.encode(&mut g, xv, &trees).unwrap();
        let batched = g.value(out).clone();
        let mut off = 0;
        for t in &trees {
            let xt = x.slice(0, off, t.len()).unwrap();
            let mut g = Graph::eval(&store);
            let xv = g.constant(xt);
            let alone = tg.encode(&mut g, xv, std::slice::from_ref(t)).unwrap();
            let want = batched.slice(0, off, t.len()).unwrap();
            prop_assert!(g.value(alone).max_abs_diff(&want) <= 1e-12);
            off += t.len();
        }
    }

    #[test]
    fn bleu_of_identical_corpora_is_100(corpus in prop::collection::vec(prop::collection::vec(word(), 4..10), 1..10)) {
        let lines: Vec<String> = corpus.iter().map(|s| s.join(" ")).collect();
        prop_assert_eq!(bleu(&lines, &lines, true).unwrap().bleu, 100.0);
    }

    #[test]
    fn bleu_is_bounded(hyps in prop::collection::vec(sentence(), 1..8), refs in prop::collection::vec(sentence(), 8)) {
        let h: Vec<String> = hyps.iter().map(|s| s.join(" ")).collect();
        let r: Vec<String> = refs[..h.len()].iter().map(|s| s.join(" ")).collect();
        let b = bleu(&h, &r, false).unwrap().bleu;
        prop_assert!((0.0..=100.0).contains(&b));
    }

    #[test]
    fn clipping_bounds_norm_and_is_idempotent(values in prop::collection::vec(-50.0f64..50.0, 1..40), threshold in 0.1f64..20.0) {
        let mut grads = Gradients::new();
        let half = values.len() / 2;
        grads.insert("a".into(), Tensor::row(values[..half].to_vec()));
        grads.insert("b".into(), Tensor::row(values[half..].to_vec()));
        let before = global_norm(&grads);
        clip_gradients(&mut grads, threshold).unwrap();
        let after = global_norm(&grads);
        prop_assert!(after <= threshold * (1.0 + 1e-12));
        if before <= threshold {
            prop_assert_eq!(after, before);
        }
        let once = grads.clone();
        clip_gradients(&mut grads, threshold).unwrap();
        for (k, v) in &grads {
            prop_assert!(v.max_abs_diff(&once[k]) <= 1e-12 * threshold);
        }
    }

    #[test]
    fn batching_keeps_every_pair_once(lens in prop::collection::vec((0usize..30, 0usize..30), 1..120), batch in 1usize..17, seed in any::<u64>()) {
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = lens.iter().map(|&(s, t)| (vec![5; s], vec![6; t])).collect();
        let expect: Vec<usize> = (0..pairs.len()).filter(|&i| (1..=20).contains(&lens[i].0) && (1..=25).contains(&lens[i].1)).collect();
        match filter_and_batch(&pairs, 20, 25, batch, seed) {
            Ok(batches) => {
                let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
                seen.sort_unstable();
                prop_assert_eq!(seen, expect);
                for b in &batches {
                    prop_assert!(b.len() <= batch && !b.is_empty());
                    for k in 0..b.len() {
                        prop_assert_eq!(b.source(k), &pairs[b.indices[k]].0[..]);
                    }
                }
            }
            Err(_) => prop_assert!(expect.is_empty()),
        }
    }

    #[test]
    fn vocabulary_round_trips_known_tokens(s in sentence()) {
        let v = Vocabulary::from_tokens(s.iter().cloned());
        prop_assert_eq!(v.decode(&v.encode(&s)), s);
    }
}
