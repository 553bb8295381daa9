use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Whitespace-tokenized lines of a UTF-8 text file.
pub fn read_tokenized(path: &Path) -> Result<Vec<Vec<String>>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    f.lines()
        .map(|l| Ok(l?.split_whitespace().map(String::from).collect()))
        .collect()
}

/// Line-aligned source and target files.
pub fn read_parallel(src: &Path, tgt: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let s = read_tokenized(src)?;
    let t = read_tokenized(tgt)?;
    if s.len() != t.len() {
        return Err(Error::Data(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            tgt.display(),
            t.len()
        )));
    }
    Ok(s.into_iter().zip(t).collect())
}

pub fn write_tokenized<S: AsRef<[String]>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.as_ref().join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
