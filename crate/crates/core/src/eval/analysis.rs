use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bleu::{sentence_stats, BleuReport, BleuStats};
use crate::error::{invalid_arg, Result};
use crate::seq2seq::{SourceInput, Translator};

/// Source-length bin edges giving six intervals: <10, [10,20), ..., ≥50.
pub const DEFAULT_LENGTH_EDGES: [usize; 5] = [10, 20, 30, 40, 50];

/// Corpus BLEU of the sentences whose source length is in `[lower, upper)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthBin {
    pub lower: usize,
    /// `None` for the open last bin.
    pub upper: Option<usize>,
    pub sentences: usize,
    /// `None` when the bin is empty.
    pub report: Option<BleuReport>,
}

/// BLEU per source-length bin. Edges must be strictly ascending; a length
/// equal to an edge belongs to the bin that starts there. No edges means
/// one bin over everything.
pub fn bleu_by_length<H: AsRef<str>, R: AsRef<str>, S: AsRef<str>>(
    hyps: &[H],
    refs: &[R],
    sources: &[S],
    edges: &[usize],
    case_sensitive: bool,
) -> Result<Vec<LengthBin>> {
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid_arg!("bin edges must be strictly ascending: {edges:?}"));
    }
    let stats = sentence_stats(hyps, refs, case_sensitive)?;
    if sources.len() != stats.len() {
        return Err(invalid_arg!("{} sources for {} hypotheses", sources.len(), stats.len()));
    }
    let mut bins: Vec<(BleuStats, usize)> = vec![(BleuStats::default(), 0); edges.len() + 1];
    for (s, src) in stats.into_iter().zip(sources) {
        let len = src.as_ref().split_whitespace().count();
        let k = edges.partition_point(|&e| e <= len);
        bins[k].0 += s;
        bins[k].1 += 1;
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(k, (s, count))| LengthBin {
            lower: if k == 0 { 0 } else { edges[k - 1] },
            upper: edges.get(k).copied(),
            sentences: count,
            report: (count > 0).then(|| s.report()),
        })
        .collect())
}

/// Attention of one greedy translation: one row per emitted target token
/// (including the closing `</s>`) over the source units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub id: usize,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub attn: Vec<Vec<f64>>,
}

pub fn alignment_record(model: &Translator, id: usize, input: &SourceInput, max_len: usize) -> Result<AlignmentRecord> {
    let hyp = model.greedy(input, max_len)?;
    Ok(AlignmentRecord {
        id,
        src: input.ids.iter().map(|&i| model.src_vocab.token(i).to_string()).collect(),
        tgt: hyp.tokens.iter().map(|&i| model.tgt_vocab.token(i).to_string()).collect(),
        attn: hyp.attention,
    })
}

/// Writes one JSON line per non-empty source; empty ones are skipped with a
/// warning. Returns the number of records written.
pub fn dump_alignments<W: Write>(
    model: &Translator,
    inputs: &[SourceInput],
    max_len: usize,
    mut out: W,
) -> Result<usize> {
    let mut written = 0;
    for (id, input) in inputs.iter().enumerate() {
        if input.is_empty() {
            log::warn!("sentence {id}: empty source, no alignment written");
            continue;
        }
        let rec = alignment_record(model, id, input, max_len)?;
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}
