use rand::seq::SliceRandom;

use super::vocab::PAD;
use crate::error::{invalid_arg, Error, Result};
use crate::rng;

/// One mini-batch. Row `k` comes from corpus position `indices[k]`, which
/// callers use to look up trees or cached parser encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// `[batch][max_src_len]`, padded with [`PAD`].
    pub src: Vec<Vec<usize>>,
    pub src_lengths: Vec<usize>,
    /// `[batch][max_tgt_len]`, padded with [`PAD`]; no BOS/EOS.
    pub tgt: Vec<Vec<usize>>,
    pub tgt_lengths: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_src_len(&self) -> usize {
        self.src.first().map_or(0, Vec::len)
    }

    /// Unpadded source of row `k`.
    pub fn source(&self, k: usize) -> &[usize] {
        &self.src[k][..self.src_lengths[k]]
    }

    pub fn target(&self, k: usize) -> &[usize] {
        &self.tgt[k][..self.tgt_lengths[k]]
    }

    /// Builds a batch from unpadded rows.
    pub fn from_rows(indices: Vec<usize>, src: Vec<Vec<usize>>, tgt: Vec<Vec<usize>>) -> Result<Self> {
        if indices.is_empty() || src.len() != indices.len() || tgt.len() != indices.len() {
            return Err(invalid_arg!("batch rows disagree: {} / {} / {}", indices.len(), src.len(), tgt.len()));
        }
        let src_lengths: Vec<usize> = src.iter().map(Vec::len).collect();
        let tgt_lengths: Vec<usize> = tgt.iter().map(Vec::len).collect();
        Ok(Batch { indices, src: pad(src), src_lengths, tgt: pad(tgt), tgt_lengths })
    }
}

fn pad(mut rows: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let max = rows.iter().map(Vec::len).max().unwrap_or(0);
    for r in &mut rows {
        r.resize(max, PAD);
    }
    rows
}

/// Batches built this many at a time are length-sorted together.
const POOL_BATCHES: usize = 20;

/// Drops pairs with an empty side or a side over its limit, shuffles by
/// `seed`, sorts pools of 20 batches by source length, cuts batches and
/// shuffles their order. Sentences are never truncated.
pub fn filter_and_batch(
    pairs: &[(Vec<usize>, Vec<usize>)],
    max_src_len: usize,
    max_tgt_len: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(invalid_arg!("batch_size must be positive"));
    }
    let mut keep: Vec<usize> = (0..pairs.len())
        .filter(|&i| {
            let (s, t) = &pairs[i];
            !s.is_empty() && !t.is_empty() && s.len() <= max_src_len && t.len() <= max_tgt_len
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyData(format!(
            "all {} pairs exceed the length limits ({max_src_len} / {max_tgt_len}) or are empty",
            pairs.len()
        )));
    }
    let mut r = rng::seeded(rng::derive_seed(seed, "batches"));
    keep.shuffle(&mut r);
    let mut batches = Vec::new();
    for pool in keep.chunks_mut(batch_size * POOL_BATCHES) {
        pool.sort_by_key(|&i| pairs[i].0.len());
        for chunk in pool.chunks(batch_size) {
            let src = chunk.iter().map(|&i| pairs[i].0.clone()).collect();
            let tgt = chunk.iter().map(|&i| pairs[i].1.clone()).collect();
            batches.push(Batch::from_rows(chunk.to_vec(), src, tgt)?);
        }
    }
    batches.shuffle(&mut r);
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(lens: &[(usize, usize)]) -> Vec<(Vec<usize>, Vec<usize>)> {
        lens.iter().map(|&(s, t)| (vec![5; s], vec![6; t])).collect()
    }

    #[test]
    fn drops_long_pairs_only() {
        let p = pairs(&[(51, 3), (50, 3), (3, 151), (3, 150)]);
        let b = filter_and_batch(&p, 50, 150, 10, 1).unwrap();
        let mut idx: Vec<usize> = b.iter().flat_map(|b| b.indices.clone()).collect();
        idx.sort();
        assert_eq!(idx, vec![1, 3]);
        let all = filter_and_batch(&p, usize::MAX, usize::MAX, 10, 1).unwrap();
        assert_eq!(all.iter().map(Batch::len).sum::<usize>(), 4);
        assert!(matches!(filter_and_batch(&p, 1, 1, 10, 1), Err(Error::EmptyData(_))));
    }

    #[test]
    fn batch_sizes() {
        let p = pairs(&vec![(4, 4); 170]);
        let mut sizes: Vec<usize> = filter_and_batch(&p, 50, 150, 80, 3).unwrap().iter().map(Batch::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![10, 80, 80]);
    }

    #[test]
    fn padding_and_determinism() {
        let p: Vec<_> = (1..30).map(|n| (vec![7; n % 9 + 1], vec![8; n % 5 + 1])).collect();
        let a = filter_and_batch(&p, 50, 50, 4, 9).unwrap();
        assert_eq!(a, filter_and_batch(&p, 50, 50, 4, 9).unwrap());
        for b in &a {
            for k in 0..b.len() {
                assert_eq!(b.source(k), p[b.indices[k]].0.as_slice());
                assert!(b.src[k][b.src_lengths[k]..].iter().all(|&x| x == PAD));
            }
        }
    }
}
