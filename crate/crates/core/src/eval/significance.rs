use rand::Rng;
use serde::Serialize;

use super::bleu::{sentence_stats, BleuStats};
use crate::error::{invalid_arg, Result};
use crate::rng;

/// Outcome of a paired bootstrap comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub bleu_a: f64,
    pub bleu_b: f64,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// Fraction of resamples in which the system with the lower full-corpus
    /// BLEU (B on a tie) scores at least as high as the other.
    pub p_value: f64,
}

pub const DEFAULT_SAMPLES: usize = 1000;

/// Paired bootstrap resampling: each resample draws sentence indices with
/// replacement and scores both systems on the same draw. Resample `i` uses a
/// generator derived from `(seed, i)`.
pub fn bootstrap_significance<A: AsRef<str>, B: AsRef<str>, R: AsRef<str>>(
    hyps_a: &[A],
    hyps_b: &[B],
    refs: &[R],
    samples: usize,
    seed: u64,
    case_sensitive: bool,
) -> Result<BootstrapResult> {
    if samples < 100 {
        return Err(invalid_arg!("need at least 100 bootstrap samples, got {samples}"));
    }
    let sa = sentence_stats(hyps_a, refs, case_sensitive)?;
    let sb = sentence_stats(hyps_b, refs, case_sensitive)?;
    if sa.is_empty() {
        return Err(invalid_arg!("empty corpus"));
    }
    let corpus = |stats: &[BleuStats], idx: &mut dyn Iterator<Item = usize>| {
        let mut t = BleuStats::default();
        for i in idx {
            t += stats[i];
        }
        t.report().bleu
    };
    let n = sa.len();
    let bleu_a = corpus(&sa, &mut (0..n));
    let bleu_b = corpus(&sb, &mut (0..n));
    let (mut wins_a, mut wins_b, mut ties) = (0, 0, 0);
    for i in 0..samples {
        let mut r = rng::seeded(rng::derive_index(seed, i as u64));
        let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
        let a = corpus(&sa, &mut idx.iter().copied());
        let b = corpus(&sb, &mut idx.iter().copied());
        match a.total_cmp(&b) {
            std::cmp::Ordering::Greater => wins_a += 1,
            std::cmp::Ordering::Less => wins_b += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
    }
    let lower_holds = if bleu_a > bleu_b { wins_b } else { wins_a };
    Ok(BootstrapResult {
        bleu_a,
        bleu_b,
        wins_a,
        wins_b,
        ties,
        p_value: (lower_holds + ties) as f64 / samples as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs() -> Vec<String> {
        (0..30).map(|i| format!("sentence number {i} has several words in it")).collect()
    }

    #[test]
    fn identical_systems_are_not_significant() {
        let r = refs();
        let a: Vec<String> = r.iter().map(|s| s.replace("several", "some")).collect();
        let res = bootstrap_significance(&a, &a, &r, 200, 5, false).unwrap();
        assert_eq!(res.ties, 200);
        assert!(res.p_value >= 0.4);
    }

    #[test]
    fn perfect_against_empty() {
        let r = refs();
        let empty = vec![""; r.len()];
        let res = bootstrap_significance(&r, &empty, &r, DEFAULT_SAMPLES, 9, false).unwrap();
        assert_eq!(res.bleu_a, 100.0);
        assert!(res.p_value < 0.01);
        let flipped = bootstrap_significance(&empty, &r, &r, 100, 9, false).unwrap();
        assert!(flipped.p_value < 0.01);
    }

    #[test]
    fn deterministic_and_validated() {
        let r = refs();
        let a: Vec<String> = r.iter().enumerate().map(|(i, s)| if i % 3 == 0 { s.replace("words", "tokens") } else { s.clone() }).collect();
        let b: Vec<String> = r.iter().enumerate().map(|(i, s)| if i % 2 == 0 { s.replace("has", "holds") } else { s.clone() }).collect();
        let x = bootstrap_significance(&a, &b, &r, 300, 1, false).unwrap();
        assert_eq!(x, bootstrap_significance(&a, &b, &r, 300, 1, false).unwrap());
        assert!(bootstrap_significance(&a, &b, &r, 99, 1, false).is_err());
        assert!(bootstrap_significance(&a[..2], &b, &r, 100, 1, false).is_err());
    }
}
