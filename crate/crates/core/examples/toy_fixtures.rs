//! Writes the bundled toy corpus: `cargo run -p sawr --example toy_fixtures -- DIR`.

use std::path::PathBuf;

use sawr::data::write_tokenized;
use sawr::depparse::{save_treebank, Sentence};
use sawr::toy::{parallel_corpus, Grammar};

fn main() -> sawr::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/toy".into()));
    std::fs::create_dir_all(&dir)?;
    let pairs = parallel_corpus(240, 7);
    let (train, held) = pairs.split_at(200);
    for (name, set) in [("train", train), ("dev", held)] {
        let src: Vec<Vec<String>> = set.iter().map(|p| p.source.clone()).collect();
        let tgt: Vec<Vec<String>> = set.iter().map(|p| p.target.clone()).collect();
        let bank: Vec<Sentence> =
            set.iter().map(|p| Sentence { tokens: p.source.clone(), tree: p.tree.clone() }).collect();
        write_tokenized(&dir.join(format!("{name}.src")), &src)?;
        write_tokenized(&dir.join(format!("{name}.tgt")), &tgt)?;
        save_treebank(&dir.join(format!("{name}.conll")), &bank)?;
    }
    save_treebank(&dir.join("treebank.conll"), &Grammar::small().treebank(300, 11))?;
    save_treebank(&dir.join("treebank.dev.conll"), &Grammar::small().treebank(60, 12))?;
    Ok(())
}
