//! First-order projective decoding.
//!
//! The chart runs over tokens `1..=n` only; the virtual root then takes
//! exactly one child `r`, so the best tree scores
//! `max_r arc(0, r) + left(1, r) + right(r, n)`.
//!
//! Ties are broken locally and deterministically: the lowest-index root wins,
//! and inside a span the split closest to the right end wins, which prefers
//! shorter arcs. When every score is equal the result attaches every word to
//! the first word.

use super::tree::DependencyTree;
use crate::error::{invalid_arg, shape_err, Result};
use crate::tensor::Tensor;

/// Arc scores for one sentence: `arcs[h, d - 1]` scores head `h` (0 = root)
/// for token `d`. Optional per-label score matrices have the same layout.
#[derive(Clone, Debug)]
pub struct ArcScores {
    pub arcs: Tensor,
    pub labels: Vec<Tensor>,
    pub label_names: Vec<String>,
}

impl ArcScores {
    /// Unlabeled scores; the self-arc diagonal is overwritten with `-inf`.
    pub fn new(mut arcs: Tensor) -> Result<Self> {
        let (rows, n) = arcs.dims2()?;
        if rows != n + 1 {
            return Err(shape_err!("arc scores must be (n + 1) x n, got {:?}", arcs.shape()));
        }
        for d in 1..=n {
            arcs.data_mut()[d * n + d - 1] = f64::NEG_INFINITY;
        }
        Ok(ArcScores { arcs, labels: Vec::new(), label_names: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.arcs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arc(&self, h: usize, d: usize) -> f64 {
        self.arcs.at(h, d - 1)
    }
}

/// Sum of arc scores of a head assignment.
pub fn tree_score(arcs: &Tensor, heads: &[usize]) -> f64 {
    let n = arcs.cols();
    heads.iter().enumerate().map(|(i, &h)| arcs.data()[h * n + i]).sum()
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

/// Best single-root projective head assignment and its score.
pub fn eisner(arcs: &Tensor) -> Result<(Vec<usize>, f64)> {
    let (rows, n) = arcs.dims2()?;
    if n == 0 {
        return Err(invalid_arg!("cannot decode an empty sentence"));
    }
    if rows != n + 1 {
        return Err(shape_err!("arc scores must be (n + 1) x n, got {:?}", arcs.shape()));
    }
    let s = |h: usize, d: usize| arcs.data()[h * n + d - 1];
    let idx = |i: usize, j: usize, dir: usize| (i * (n + 1) + j) * 2 + dir;
    let size = (n + 1) * (n + 1) * 2;
    let mut complete = vec![0.0f64; size];
    let mut incomplete = vec![f64::NEG_INFINITY; size];
    let mut complete_bp = vec![0usize; size];
    let mut incomplete_bp = vec![0usize; size];

    for width in 1..n {
        for i in 1..=n - width {
            let j = i + width;
            let mut best = f64::NEG_INFINITY;
            let mut arg = j - 1;
            for k in (i..j).rev() {
                let v = complete[idx(i, k, RIGHT)] + complete[idx(k + 1, j, LEFT)];
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            incomplete[idx(i, j, LEFT)] = best + s(j, i);
            incomplete[idx(i, j, RIGHT)] = best + s(i, j);
            incomplete_bp[idx(i, j, LEFT)] = arg;
            incomplete_bp[idx(i, j, RIGHT)] = arg;

            let mut best = f64::NEG_INFINITY;
            let mut arg = j - 1;
            for k in (i..j).rev() {
                let v = complete[idx(i, k, LEFT)] + incomplete[idx(k, j, LEFT)];
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            complete[idx(i, j, LEFT)] = best;
            complete_bp[idx(i, j, LEFT)] = arg;

            let mut best = f64::NEG_INFINITY;
            let mut arg = j;
            for k in (i + 1..=j).rev() {
                let v = incomplete[idx(i, k, RIGHT)] + complete[idx(k, j, RIGHT)];
                if v > best {
                    best = v;
                    arg = k;
                }
            }
            complete[idx(i, j, RIGHT)] = best;
            complete_bp[idx(i, j, RIGHT)] = arg;
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut root = 1;
    for r in 1..=n {
        let v = s(0, r) + complete[idx(1, r, LEFT)] + complete[idx(r, n, RIGHT)];
        if v > best {
            best = v;
            root = r;
        }
    }
    if !best.is_finite() {
        return Err(invalid_arg!("no finite-scoring tree"));
    }

    let mut heads = vec![0usize; n];
    heads[root - 1] = 0;
    // (i, j, dir, is_complete)
    let mut stack = vec![(1, root, LEFT, true), (root, n, RIGHT, true)];
    while let Some((i, j, dir, full)) = stack.pop() {
        if i == j {
            continue;
        }
        if full {
            let k = complete_bp[idx(i, j, dir)];
            if dir == LEFT {
                stack.push((i, k, LEFT, true));
                stack.push((k, j, LEFT, false));
            } else {
                stack.push((i, k, RIGHT, false));
                stack.push((k, j, RIGHT, true));
            }
        } else {
            let k = incomplete_bp[idx(i, j, dir)];
            if dir == LEFT {
                heads[i - 1] = j;
            } else {
                heads[j - 1] = i;
            }
            stack.push((i, k, RIGHT, true));
            stack.push((k + 1, j, LEFT, true));
        }
    }
    Ok((heads, best))
}

/// Highest-scoring projective tree; each arc takes its best label.
pub fn decode_projective(scores: &ArcScores) -> Result<DependencyTree> {
    let (heads, _) = eisner(&scores.arcs)?;
    let n = heads.len();
    let labels = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if scores.labels.is_empty() {
                return "_".to_string();
            }
            let at = h * n + i;
            let mut best = 0;
            for (k, m) in scores.labels.iter().enumerate() {
                if m.data()[at] > scores.labels[best].data()[at] {
                    best = k;
                }
            }
            scores.label_names.get(best).cloned().unwrap_or_else(|| best.to_string())
        })
        .collect();
    DependencyTree::new(heads, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_is_root() {
        let s = ArcScores::new(Tensor::from_rows(&[[0.3], [1.0]]).unwrap()).unwrap();
        assert_eq!(decode_projective(&s).unwrap().heads(), &[0]);
        assert!(eisner(&Tensor::zeros(&[1, 0])).is_err());
    }

    #[test]
    fn equal_scores_attach_everything_to_the_first_word() {
        for n in 1..8 {
            let s = ArcScores::new(Tensor::zeros(&[n + 1, n])).unwrap();
            let t = decode_projective(&s).unwrap();
            let mut want = vec![1; n];
            want[0] = 0;
            assert_eq!(t.heads(), want.as_slice());
        }
    }

    #[test]
    fn follows_a_clear_preference() {
        // root -> 2, 2 -> 1, 2 -> 3
        let mut a = Tensor::full(&[4, 3], -5.0);
        for (h, d) in [(0, 2), (2, 1), (2, 3)] {
            a.data_mut()[h * 3 + d - 1] = 5.0;
        }
        let (heads, score) = eisner(&ArcScores::new(a).unwrap().arcs).unwrap();
        assert_eq!(heads, vec![2, 0, 2]);
        assert_eq!(score, 15.0);
    }

    #[test]
    fn labels_take_the_per_arc_argmax() {
        let mut s = ArcScores::new(Tensor::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]).unwrap()).unwrap();
        s.labels = vec![Tensor::zeros(&[3, 2]), Tensor::full(&[3, 2], 1.0)];
        s.label_names = vec!["a".into(), "b".into()];
        let t = decode_projective(&s).unwrap();
        assert_eq!(t.heads(), &[0, 1]);
        assert_eq!(t.labels(), &["b", "b"]);
    }
}
