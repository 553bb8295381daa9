//! On-disk parser encodings for frozen-parser training.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8 bytes  "SAWRCACH"
//! version   u32      1
//! hash_len  u32, hash bytes   SHA-256 hex of the producing parser checkpoint
//! count     u32
//! count × { index u32, n u32, dim u32, n·dim f64 row-major }
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SAWRCACH";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SawrCache {
    pub parser_hash: String,
    pub entries: BTreeMap<usize, Arc<Tensor>>,
}

impl SawrCache {
    pub fn new(parser_hash: impl Into<String>) -> Self {
        SawrCache { parser_hash: parser_hash.into(), entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, index: usize, encoding: Tensor) {
        self.entries.insert(index, Arc::new(encoding));
    }

    pub fn get(&self, index: usize) -> Option<&Arc<Tensor>> {
        self.entries.get(&index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.parser_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.parser_hash.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (&i, t) in &self.entries {
            let (n, dim) = (t.rows(), t.cols());
            for v in [i, n, dim] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            let end = pos + k;
            if end > bytes.len() {
                return Err(Error::Data(format!("SAWR cache truncated at byte {pos}")));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(Error::Data("not a SAWR cache file".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
        let version = u32_at(take(4)?);
        if version != VERSION as usize {
            return Err(Error::Data(format!("unsupported SAWR cache version {version}")));
        }
        let hash_len = u32_at(take(4)?);
        let parser_hash = String::from_utf8(take(hash_len)?.to_vec())
            .map_err(|_| Error::Data("SAWR cache hash is not UTF-8".into()))?;
        let count = u32_at(take(4)?);
        let mut cache = SawrCache::new(parser_hash);
        for _ in 0..count {
            let index = u32_at(take(4)?);
            let n = u32_at(take(4)?);
            let dim = u32_at(take(4)?);
            let data = take(n * dim * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            cache.insert(index, Tensor::new(vec![n, dim], data)?);
        }
        if pos != bytes.len() {
            return Err(Error::Data("trailing bytes after SAWR cache records".into()));
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Loads a cache, refusing it unless it was produced by the parser
    /// checkpoint whose hash is `expected_hash`.
    pub fn load(path: &Path, expected_hash: &str) -> Result<Self> {
        let cache = Self::from_bytes(&std::fs::read(path)?)?;
        if cache.parser_hash != expected_hash {
            return Err(Error::Data(format!(
                "{} was built from parser {} but the configured parser is {expected_hash}",
                path.display(),
                cache.parser_hash
            )));
        }
        Ok(cache)
    }
}
