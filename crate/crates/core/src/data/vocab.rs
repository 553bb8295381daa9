use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid_arg, Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token ↔ id map with four reserved entries at ids 0..3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Reserved entries followed by `tokens` in order; duplicates and
    /// reserved names are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED.iter().map(|s| s.to_string()).chain(tokens.into_iter().map(Into::into)) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    /// Keeps the `max_size - 4` most frequent tokens. Equal counts are
    /// ordered by first occurrence.
    pub fn build<'a, I, S>(corpus: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        if max_size <= RESERVED.len() {
            return Err(invalid_arg!("vocabulary size must exceed {}, got {max_size}", RESERVED.len()));
        }
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut total = 0usize;
        for sentence in corpus {
            for tok in sentence.as_ref() {
                let next = counts.len();
                counts.entry(tok.as_str()).or_insert((0, next)).0 += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(invalid_arg!("cannot build a vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let keep = ranked
            .into_iter()
            .filter(|(t, _)| !RESERVED.contains(t))
            .take(max_size - RESERVED.len())
            .map(|(t, _)| t.to_string());
        Ok(Self::from_tokens(keep))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<usize> {
        sentence.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Tokens for `ids`, stopping at the first [`EOS`] and skipping padding.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }

    /// One non-reserved token per line; line `k` (0-based) holds id `k + 4`.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens[RESERVED.len()..] {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.chars().any(char::is_whitespace) || RESERVED.contains(&line.as_str()) {
                return Err(Error::Parse { line: i + 1, msg: format!("invalid vocabulary entry {line:?}") });
            }
            tokens.push(line);
        }
        let v = Self::from_tokens(tokens.iter().cloned());
        if v.len() != tokens.len() + RESERVED.len() {
            return Err(Error::Data("duplicate vocabulary entries".into()));
        }
        Ok(v)
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
