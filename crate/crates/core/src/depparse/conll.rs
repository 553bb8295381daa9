//! CoNLL-style treebank files.
//!
//! Sentences are separated by blank lines and `#` lines are comments. Each
//! token line has either the ten CoNLL-U columns (`ID FORM LEMMA UPOS XPOS
//! FEATS HEAD DEPREL DEPS MISC`) or four columns (`ID FORM HEAD DEPREL`),
//! tab-separated. Multiword ranges (`1-2`) and empty nodes (`1.1`) are
//! skipped.

use std::io::{BufRead, Write};
use std::path::Path;

use super::tree::DependencyTree;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tree: DependencyTree,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

struct Pending {
    first_line: usize,
    tokens: Vec<String>,
    heads: Vec<usize>,
    labels: Vec<String>,
}

impl Pending {
    fn new() -> Self {
        Pending { first_line: 0, tokens: Vec::new(), heads: Vec::new(), labels: Vec::new() }
    }

    fn finish(&mut self, index: usize) -> Result<Option<Sentence>> {
        if self.tokens.is_empty() {
            return Ok(None);
        }
        let heads = std::mem::take(&mut self.heads);
        let labels = std::mem::take(&mut self.labels);
        let tree = DependencyTree::new(heads, labels).map_err(|e| {
            Error::Data(format!("sentence {index} (line {}): {}", self.first_line, strip_kind(&e)))
        })?;
        Ok(Some(Sentence { tokens: std::mem::take(&mut self.tokens), tree }))
    }
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Data(m) | Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

pub fn read_treebank<R: BufRead>(r: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut cur = Pending::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(s) = cur.finish(out.len())? {
                out.push(s);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (id, form, head, label) = match cols.len() {
            10 => (cols[0], cols[1], cols[6], cols[7]),
            4 => (cols[0], cols[1], cols[2], cols[3]),
            k => {
                return Err(Error::Parse { line: lineno, msg: format!("expected 4 or 10 tab-separated columns, found {k}") })
            }
        };
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad token index {id:?}") })?;
        if id != cur.tokens.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("token index {id}, expected {}", cur.tokens.len() + 1),
            });
        }
        let head: usize = head
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad head {head:?}") })?;
        if form.is_empty() || form.chars().any(char::is_whitespace) {
            return Err(Error::Parse { line: lineno, msg: format!("bad word form {form:?}") });
        }
        if cur.tokens.is_empty() {
            cur.first_line = lineno;
        }
        cur.tokens.push(form.to_string());
        cur.heads.push(head);
        cur.labels.push(label.to_string());
    }
    if let Some(s) = cur.finish(out.len())? {
        out.push(s);
    }
    Ok(out)
}

/// Writes ten-column CoNLL-U with unused columns set to `_`.
pub fn write_treebank<W: Write>(mut w: W, sentences: &[Sentence]) -> Result<()> {
    for s in sentences {
        for (i, tok) in s.tokens.iter().enumerate() {
            let d = i + 1;
            writeln!(w, "{d}\t{tok}\t_\t_\t_\t_\t{}\t{}\t_\t_", s.tree.head(d), s.tree.label(d))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_treebank(path: &Path) -> Result<Vec<Sentence>> {
    read_treebank(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_treebank(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_treebank(&mut f, sentences)?;
    f.flush()?;
    Ok(())
}
