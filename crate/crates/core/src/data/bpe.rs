//! Byte-pair encoding over whitespace-separated words.
//!
//! Merges never cross word boundaries. In segmented text every unit except
//! the last of its word carries the suffix `@@`, so `lower` with merges
//! `(l,o) (lo,w)` becomes `low@@ e@@ r` and decoding is "drop `@@ `".
//! A word whose final unit itself ends in `@@` cannot be told apart from a
//! continuation; such words do not round-trip.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        BpeModel { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Units of one word after applying merges in learned order.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut units: Vec<String> = word.chars().map(String::from).collect();
        while units.len() > 1 {
            let best = units
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut next = Vec::with_capacity(units.len());
            let mut i = 0;
            while i < units.len() {
                if i + 1 < units.len() && &units[i] == a && &units[i + 1] == b {
                    next.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    next.push(std::mem::take(&mut units[i]));
                    i += 1;
                }
            }
            units = next;
        }
        units
    }

    /// Segments a sentence, marking non-final units with `@@`.
    pub fn apply<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<String> {
        let mut out = Vec::new();
        for w in sentence {
            let units = self.segment(w.as_ref());
            let last = units.len().saturating_sub(1);
            for (i, u) in units.into_iter().enumerate() {
                out.push(if i < last { format!("{u}{CONTINUATION}") } else { u });
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut merges = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(Error::Parse { line: i + 1, msg: format!("expected two space-separated units, got {line:?}") });
            }
            merges.push((parts[0].to_string(), parts[1].to_string()));
        }
        Ok(Self::from_merges(merges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Inverse of [`BpeModel::apply`].
pub fn decode_bpe<S: AsRef<str>>(units: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for u in units {
        let u = u.as_ref();
        match u.strip_suffix(CONTINUATION) {
            Some(stem) => cur.push_str(stem),
            None => {
                cur.push_str(u);
                out.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Word counts of a tokenized corpus, in a stable order.
pub fn word_counts<S: AsRef<[String]>>(corpus: &[S]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in corpus {
        for w in s.as_ref() {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect()
}

type Pair = (u32, u32);

struct Learner {
    symbols: Vec<String>,
    intern: HashMap<String, u32>,
    words: Vec<(Vec<u32>, i64)>,
    counts: HashMap<Pair, i64>,
    occurs: HashMap<Pair, HashSet<usize>>,
    heap: BinaryHeap<HeapEntry>,
}

/// Count, then the pair's text (lexicographically smallest first on ties).
type HeapEntry = (i64, Reverse<(String, String)>, Pair);

impl Learner {
    fn sym(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.intern.get(s) {
            return id;
        }
        self.symbols.push(s.to_string());
        let id = (self.symbols.len() - 1) as u32;
        self.intern.insert(s.to_string(), id);
        id
    }

    fn bump(&mut self, p: Pair, word: usize, delta: i64) {
        let c = self.counts.entry(p).or_default();
        *c += delta;
        let c = *c;
        if delta > 0 {
            self.occurs.entry(p).or_default().insert(word);
        }
        if c > 0 {
            let key = (self.symbols[p.0 as usize].clone(), self.symbols[p.1 as usize].clone());
            self.heap.push((c, Reverse(key), p));
        }
    }

    fn best(&mut self) -> Option<(Pair, i64)> {
        while let Some((c, _, p)) = self.heap.pop() {
            if self.counts.get(&p) == Some(&c) {
                return Some((p, c));
            }
        }
        None
    }

    fn merge(&mut self, p: Pair) {
        let merged = format!("{}{}", self.symbols[p.0 as usize], self.symbols[p.1 as usize]);
        let m = self.sym(&merged);
        let mut touched: Vec<usize> = self.occurs.remove(&p).unwrap_or_default().into_iter().collect();
        touched.sort_unstable();
        for w in touched {
            let (syms, freq) = self.words[w].clone();
            if !syms.windows(2).any(|x| (x[0], x[1]) == p) {
                continue;
            }
            for x in syms.windows(2) {
                self.bump((x[0], x[1]), w, -freq);
            }
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == p {
                    next.push(m);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            for x in next.windows(2) {
                self.bump((x[0], x[1]), w, freq);
            }
            self.words[w].0 = next;
        }
    }
}

/// Greedily merges the most frequent adjacent pair, ties going to the
/// lexicographically smallest `(left, right)`. Stops after `num_merges`
/// merges or when no pair occurs at least twice.
pub fn learn_bpe(freqs: &[(String, usize)], num_merges: usize) -> BpeModel {
    let mut l = Learner {
        symbols: Vec::new(),
        intern: HashMap::new(),
        words: Vec::new(),
        counts: HashMap::new(),
        occurs: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    for (w, f) in freqs {
        let syms: Vec<u32> = w.chars().map(|c| l.sym(&c.to_string())).collect();
        l.words.push((syms, *f as i64));
    }
    let mut initial: HashMap<Pair, i64> = HashMap::new();
    for (i, (syms, f)) in l.words.iter().enumerate() {
        for x in syms.windows(2) {
            *initial.entry((x[0], x[1])).or_default() += f;
            l.occurs.entry((x[0], x[1])).or_default().insert(i);
        }
    }
    for (p, c) in initial {
        l.counts.insert(p, c);
        let key = (l.symbols[p.0 as usize].clone(), l.symbols[p.1 as usize].clone());
        l.heap.push((c, Reverse(key), p));
    }
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let Some((p, c)) = l.best() else { break };
        if c < 2 {
            break;
        }
        merges.push((l.symbols[p.0 as usize].clone(), l.symbols[p.1 as usize].clone()));
        l.merge(p);
    }
    BpeModel::from_merges(merges)
}
