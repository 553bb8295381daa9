use std::collections::HashMap;
use std::fmt;
use std::ops::AddAssign;

use serde::Serialize;

use crate::error::{invalid_arg, Result};

/// Sufficient statistics of corpus BLEU; sentence statistics add up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BleuStats {
    /// Clipped n-gram matches, n = 1..4.
    pub matches: [usize; 4],
    /// Hypothesis n-gram counts, n = 1..4.
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..4 {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn ngram_counts<'a>(words: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut m = HashMap::new();
    for w in words.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn words(s: &str, lowercase: bool) -> Vec<String> {
    s.split_whitespace().map(|w| if lowercase { w.to_lowercase() } else { w.to_string() }).collect()
}

impl BleuStats {
    /// Statistics of one whitespace-tokenized sentence pair.
    pub fn sentence(hyp: &str, reference: &str, case_sensitive: bool) -> Self {
        let h = words(hyp, !case_sensitive);
        let r = words(reference, !case_sensitive);
        let h: Vec<&str> = h.iter().map(String::as_str).collect();
        let r: Vec<&str> = r.iter().map(String::as_str).collect();
        let mut s = BleuStats { hyp_len: h.len(), ref_len: r.len(), ..Default::default() };
        for n in 1..=4 {
            let rc = ngram_counts(&r, n);
            for (g, c) in ngram_counts(&h, n) {
                s.totals[n - 1] += c;
                s.matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
        }
        s
    }

    pub fn report(&self) -> BleuReport {
        let precisions: [f64; 4] = std::array::from_fn(|n| {
            if self.totals[n] == 0 { 0.0 } else { self.matches[n] as f64 / self.totals[n] as f64 }
        });
        let (bp, ratio) = match (self.hyp_len, self.ref_len) {
            (_, 0) => (0.0, 0.0),
            (0, _) => (0.0, 0.0),
            (h, r) if h < r => ((1.0 - r as f64 / h as f64).exp(), h as f64 / r as f64),
            (h, r) => (1.0, h as f64 / r as f64),
        };
        let bleu = if bp == 0.0 || precisions.contains(&0.0) {
            0.0
        } else {
            100.0 * bp * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
        };
        BleuReport { bleu, precisions, brevity_penalty: bp, ratio, hyp_len: self.hyp_len, ref_len: self.ref_len }
    }
}

/// Corpus BLEU with its components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    /// In `[0, 100]`.
    pub bleu: f64,
    /// Modified n-gram precisions in `[0, 1]`.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub ratio: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions.map(|p| 100.0 * p);
        write!(
            f,
            "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            self.bleu, p[0], p[1], p[2], p[3], self.brevity_penalty, self.ratio, self.hyp_len, self.ref_len
        )
    }
}

/// Per-sentence statistics for aligned hypothesis and reference lists.
pub fn sentence_stats<H: AsRef<str>, R: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    case_sensitive: bool,
) -> Result<Vec<BleuStats>> {
    if hyps.len() != refs.len() {
        return Err(invalid_arg!("{} hypotheses for {} references", hyps.len(), refs.len()));
    }
    Ok(hyps.iter().zip(refs).map(|(h, r)| BleuStats::sentence(h.as_ref(), r.as_ref(), case_sensitive)).collect())
}

/// Un-smoothed corpus BLEU over whitespace-tokenized sentences with one
/// reference each, computed like `multi-bleu.perl` (`-lc` unless
/// `case_sensitive`). Any zero n-gram precision gives 0, so identical
/// corpora score 100 only when some sentence has at least four tokens.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R], case_sensitive: bool) -> Result<BleuReport> {
    let mut total = BleuStats::default();
    for s in sentence_stats(hyps, refs, case_sensitive)? {
        total += s;
    }
    Ok(total.report())
}
