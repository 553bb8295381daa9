//! Small synthetic corpora.
//!
//! A toy English-like grammar generates projective dependency trees:
//!
//! ```text
//! S  -> NP(nsubj) V [NP(obj)] [ADV(advmod)] [PP]
//! NP -> DET(det) ADJ*(amod) N [PP]
//! PP -> P(case) NP
//! ```
//!
//! Each preposition has a fixed attachment: the first half attach to the
//! verb (`obl`), the rest to the preceding noun (`nmod`). The parallel
//! corpus maps every word through a one-to-one lexicon and moves adjectives
//! after their noun, so translating well requires knowing which words form a
//! noun phrase.

use rand::Rng;

use crate::depparse::{DependencyTree, Sentence};
use crate::rng;

#[derive(Clone, Debug)]
pub struct Grammar {
    pub dets: Vec<&'static str>,
    pub adjs: Vec<&'static str>,
    pub nouns: Vec<&'static str>,
    pub verbs: Vec<&'static str>,
    pub preps: Vec<&'static str>,
    pub advs: Vec<&'static str>,
    pub p_adj: f64,
    pub p_obj: f64,
    pub p_adv: f64,
    pub p_pp: f64,
    pub max_pp_depth: usize,
}

const NOUNS: [&str; 40] = [
    "dog", "cat", "bird", "fish", "horse", "farmer", "child", "teacher", "river", "house", "garden", "tree",
    "book", "letter", "king", "queen", "doctor", "singer", "ship", "city", "road", "bridge", "window", "table",
    "apple", "stone", "cloud", "lamp", "wolf", "fox", "baker", "sailor", "poet", "hill", "lake", "field",
    "train", "clock", "song", "coat",
];
const ADJS: [&str; 12] =
    ["big", "small", "red", "old", "young", "green", "quiet", "happy", "dark", "tall", "cold", "bright"];
const VERBS: [&str; 15] = [
    "sees", "likes", "finds", "takes", "hears", "follows", "paints", "visits", "carries", "watches", "helps",
    "builds", "reads", "knows", "meets",
];

impl Grammar {
    /// Lexicon of 27 words; sentences without prepositional phrases.
    pub fn small() -> Self {
        Grammar {
            dets: vec!["the", "a"],
            adjs: ADJS[..5].to_vec(),
            nouns: NOUNS[..10].to_vec(),
            verbs: VERBS[..6].to_vec(),
            preps: vec!["with", "near"],
            advs: vec!["today", "often"],
            p_adj: 0.35,
            p_obj: 0.7,
            p_adv: 0.2,
            p_pp: 0.0,
            max_pp_depth: 0,
        }
    }

    /// Lexicon of 77 words with both prepositional-phrase attachments.
    pub fn large() -> Self {
        Grammar {
            dets: vec!["the", "a"],
            adjs: ADJS.to_vec(),
            nouns: NOUNS.to_vec(),
            verbs: VERBS.to_vec(),
            preps: vec!["with", "after", "near", "of"],
            advs: vec!["today", "often", "slowly", "again"],
            p_adj: 0.3,
            p_obj: 0.75,
            p_adv: 0.25,
            p_pp: 0.35,
            max_pp_depth: 1,
        }
    }

    pub fn words(&self) -> Vec<&'static str> {
        [&self.dets, &self.adjs, &self.nouns, &self.verbs, &self.preps, &self.advs]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    fn pick<R: Rng>(rng: &mut R, xs: &[&'static str]) -> &'static str {
        xs[rng.gen_range(0..xs.len())]
    }

    /// One sentence: words, 1-based heads and labels.
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> (Vec<String>, DependencyTree) {
        let mut b = Builder::default();
        let verb_slot = usize::MAX;
        self.noun_phrase(rng, &mut b, verb_slot, "nsubj", 0);
        let verb = b.push(Self::pick(rng, &self.verbs), 0, "root");
        b.fix(verb_slot, verb);
        if rng.gen_bool(self.p_obj) {
            self.noun_phrase(rng, &mut b, verb, "obj", 0);
        }
        if rng.gen_bool(self.p_adv) {
            b.push(Self::pick(rng, &self.advs), verb, "advmod");
        }
        if self.p_pp > 0.0 && rng.gen_bool(self.p_pp) {
            let half = self.preps.len() / 2;
            let p = rng.gen_range(0..half.max(1));
            self.prep_phrase(rng, &mut b, verb, p, "obl", 0);
        }
        b.finish()
    }

    fn noun_phrase<R: Rng>(&self, rng: &mut R, b: &mut Builder, head: usize, label: &str, depth: usize) -> usize {
        b.push(Self::pick(rng, &self.dets), usize::MAX - 1, "det");
        let mut adjs = 0;
        while adjs < 2 && rng.gen_bool(self.p_adj) {
            b.push(Self::pick(rng, &self.adjs), usize::MAX - 1, "amod");
            adjs += 1;
        }
        let noun = b.push(Self::pick(rng, &self.nouns), head, label);
        b.fix(usize::MAX - 1, noun);
        if depth < self.max_pp_depth && self.p_pp > 0.0 && rng.gen_bool(self.p_pp) {
            let half = self.preps.len() / 2;
            let p = rng.gen_range(half..self.preps.len());
            self.prep_phrase(rng, b, noun, p, "nmod", depth + 1);
        }
        noun
    }

    fn prep_phrase<R: Rng>(&self, rng: &mut R, b: &mut Builder, head: usize, prep: usize, label: &str, depth: usize) {
        b.push(self.preps[prep], usize::MAX - 2, "case");
        let noun = self.noun_phrase(rng, b, head, label, depth.max(self.max_pp_depth));
        b.fix(usize::MAX - 2, noun);
    }

    pub fn treebank(&self, n: usize, seed: u64) -> Vec<Sentence> {
        let mut r = rng::seeded(rng::derive_seed(seed, "toy-treebank"));
        (0..n)
            .map(|_| {
                let (tokens, tree) = self.sentence(&mut r);
                Sentence { tokens, tree }
            })
            .collect()
    }
}

/// Collects words with provisional heads; placeholders (values near
/// `usize::MAX`) are resolved by [`Builder::fix`] once the head word exists.
#[derive(Default)]
struct Builder {
    words: Vec<String>,
    heads: Vec<usize>,
    labels: Vec<String>,
}

impl Builder {
    fn push(&mut self, w: &str, head: usize, label: &str) -> usize {
        self.words.push(w.to_string());
        self.heads.push(head);
        self.labels.push(label.to_string());
        self.words.len()
    }

    fn fix(&mut self, placeholder: usize, head: usize) {
        for h in &mut self.heads {
            if *h == placeholder {
                *h = head;
            }
        }
    }

    fn finish(self) -> (Vec<String>, DependencyTree) {
        let tree = DependencyTree::new(self.heads, self.labels).expect("grammar builds valid trees");
        (self.words, tree)
    }
}

/// Target-side word for a source word: its letters reversed.
pub fn lexicon(word: &str) -> String {
    word.chars().rev().collect()
}

/// Translation of a toy sentence: lexicon lookup, with adjectives moved
/// after their noun.
pub fn translate(tokens: &[String], tree: &DependencyTree) -> Vec<String> {
    let n = tokens.len();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut pending: Vec<usize> = Vec::new();
    for d in 1..=n {
        if tree.label(d) == "amod" {
            pending.push(d);
            continue;
        }
        order.push(d);
        let adjs: Vec<usize> = pending.iter().copied().filter(|&a| tree.head(a) == d).collect();
        pending.retain(|a| !adjs.contains(a));
        order.extend(adjs);
    }
    order.extend(pending);
    order.into_iter().map(|d| lexicon(&tokens[d - 1])).collect()
}

/// One parallel example with its source tree.
#[derive(Clone, Debug)]
pub struct ToyPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub tree: DependencyTree,
}

/// `n` distinct pairs from [`Grammar::small`].
pub fn parallel_corpus(n: usize, seed: u64) -> Vec<ToyPair> {
    let g = Grammar::small();
    let mut r = rng::seeded(rng::derive_seed(seed, "toy-parallel"));
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 100 * n.max(1) {
        attempts += 1;
        let (source, tree) = g.sentence(&mut r);
        if !seen.insert(source.join(" ")) {
            continue;
        }
        let target = translate(&source, &tree);
        out.push(ToyPair { source, target, tree });
    }
    out
}
