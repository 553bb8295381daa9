//! Experiment configuration: a TOML document with strict keys, plus
//! `--section.key value` overrides from the command line.

use std::path::{Path, PathBuf};

use sawr::depparse::{EncoderLayers, ParserTrainConfig};
use sawr::eval::{DEFAULT_LENGTH_EDGES, DEFAULT_SAMPLES};
use sawr::seq2seq::{ModelConfig, SyntaxMode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Baseline,
    Sawr,
    SawrTuned,
    TreeRnn,
    TreeLinearized,
}

impl Mode {
    pub fn syntax(self) -> SyntaxMode {
        match self {
            Mode::Baseline => SyntaxMode::None,
            Mode::Sawr | Mode::SawrTuned => SyntaxMode::Sawr,
            Mode::TreeRnn => SyntaxMode::TreeRnn,
            Mode::TreeLinearized => SyntaxMode::TreeLinearized,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Sawr => "sawr",
            Mode::SawrTuned => "sawr-tuned",
            Mode::TreeRnn => "tree-rnn",
            Mode::TreeLinearized => "tree-linearized",
        }
    }
}

/// Translator dimensions (`[model]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub decoder_dim: usize,
    pub output_dim: usize,
    pub sawr_dim: usize,
    pub sawr_layers: EncoderLayers,
    pub tree_dim: usize,
    pub dropout: f64,
    pub init_range: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            decoder_dim: m.decoder_dim,
            output_dim: m.output_dim,
            sawr_dim: m.sawr_dim,
            sawr_layers: m.sawr_layers,
            tree_dim: m.tree_dim,
            dropout: m.dropout,
            init_range: m.init_range,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, mode: Mode) -> ModelConfig {
        ModelConfig {
            mode: mode.syntax(),
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            decoder_dim: self.decoder_dim,
            output_dim: self.output_dim,
            sawr_dim: self.sawr_dim,
            sawr_layers: self.sawr_layers,
            tree_dim: self.tree_dim,
            dropout: self.dropout,
            init_range: self.init_range,
        }
    }
}

/// Translation training (`[train]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    /// Sentence pairs with longer sources (in words) are dropped.
    pub max_src_len: usize,
    /// Sentence pairs with longer targets (in units) are dropped.
    pub max_tgt_len: usize,
    /// Stop after this many epochs without a dev BLEU gain; 0 never stops.
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            clip: t.clip,
            max_src_len: t.max_src_len,
            max_tgt_len: t.max_tgt_len,
            patience: 0,
        }
    }
}

/// Vocabulary and subword settings (`[vocab]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSection {
    pub src_size: usize,
    pub tgt_size: usize,
    /// 0 keeps source words whole.
    pub src_bpe_merges: usize,
    /// 0 keeps target words whole.
    pub tgt_bpe_merges: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection { src_size: 50_000, tgt_size: 50_000, src_bpe_merges: 0, tgt_bpe_merges: 32_000 }
    }
}

/// Decoding (`[decode]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub beam: usize,
    pub max_len: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection { beam: 5, max_len: 150 }
    }
}

/// Evaluation (`[eval]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub case_sensitive: bool,
    pub bootstrap_samples: usize,
    pub length_edges: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            case_sensitive: false,
            bootstrap_samples: DEFAULT_SAMPLES,
            length_edges: DEFAULT_LENGTH_EDGES.to_vec(),
        }
    }
}

/// Input and output locations (`[paths]`). Relative paths are resolved
/// against the directory of the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// CoNLL treebank for parser training.
    pub treebank: Option<PathBuf>,
    pub dev_treebank: Option<PathBuf>,
    /// Parser checkpoint (written by train-parser, read elsewhere).
    pub parser: Option<PathBuf>,
    pub train_src: Option<PathBuf>,
    pub train_tgt: Option<PathBuf>,
    /// CoNLL trees of the training sources; parsed with `parser` if absent.
    pub train_tree: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_tgt: Option<PathBuf>,
    pub dev_tree: Option<PathBuf>,
    pub test_src: Option<PathBuf>,
    pub test_ref: Option<PathBuf>,
    pub test_tree: Option<PathBuf>,
    /// Directory of SAWR caches (`train.sawr`, `dev.sawr`, `test.sawr`).
    pub sawr_cache: Option<PathBuf>,
    /// Translator checkpoint.
    pub model: Option<PathBuf>,
    /// Ensemble members.
    pub models: Vec<PathBuf>,
    /// Translations (written by translate, read by the evaluation commands).
    pub output: Option<PathBuf>,
    /// Second system for significance testing.
    pub output_b: Option<PathBuf>,
    pub alignments: Option<PathBuf>,
    pub length_report: Option<PathBuf>,
    /// Where the run manifest is appended; `runs` next to the config file
    /// by default.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    /// Worker threads for decoding, parsing and extraction. Results do not
    /// depend on it; training is single-threaded.
    pub threads: usize,
    pub model: ModelSection,
    pub train: TrainSection,
    pub parser: ParserTrainConfig,
    pub vocab: VocabSection,
    pub decode: DecodeSection,
    pub eval: EvalSection,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::default(),
            seed: 1,
            threads: 1,
            model: ModelSection::default(),
            train: TrainSection::default(),
            parser: ParserTrainConfig::default(),
            vocab: VocabSection::default(),
            decode: DecodeSection::default(),
            eval: EvalSection::default(),
            paths: Paths::default(),
        }
    }
}

/// Turns serde's "unknown field `x`, expected one of `a`, `b`" into a
/// message with the closest valid key.
fn explain(msg: &str) -> String {
    let Some(rest) = msg.split("unknown field `").nth(1) else { return msg.trim().to_string() };
    let Some((key, tail)) = rest.split_once('`') else { return msg.trim().to_string() };
    let candidates: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
    // `learning_rte` -> `lr`: initials of the words count as a full match.
    let initials: String = key.split('_').filter_map(|w| w.chars().next()).collect();
    let best = candidates
        .iter()
        .map(|c| (if initials.len() > 1 && initials == *c { 1.0 } else { strsim::jaro_winkler(key, c) }, *c))
        .filter(|(s, _)| *s > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((_, c)) => format!("unknown key `{key}` (did you mean `{c}`?)"),
        None => format!("unknown key `{key}`; valid keys here: {}", candidates.join(", ")),
    }
}

/// Parses a command-line value as TOML, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `dotted` (e.g. `train.lr`) in `doc`.
pub fn set_key(doc: &mut toml::Table, dotted: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{dotted}`")));
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{dotted}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Applies `--key value` pairs to a document.
pub fn apply_overrides(doc: &mut toml::Table, args: &[String]) -> CliResult<()> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| CliError::Config(format!("expected `--key value`, found `{flag}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Config(format!("`{flag}` needs a value")))?;
                (key, v.clone())
            }
        };
        set_key(doc, &key.replace('-', "_"), parse_value(&value))?;
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    /// Reads an optional config file, applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let (mut doc, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                let doc: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", p.display(), e.message())))?;
                (doc, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        apply_overrides(&mut doc, overrides)?;
        let mut cfg = Self::from_table(doc)?;
        cfg.resolve_paths(&base);
        if cfg.paths.out_dir.is_none() {
            cfg.paths.out_dir = Some(base.join("runs"));
        }
        Ok(cfg)
    }

    pub fn from_table(doc: toml::Table) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(explain(e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        Self::from_table(doc)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.treebank,
            &mut p.dev_treebank,
            &mut p.parser,
            &mut p.train_src,
            &mut p.train_tgt,
            &mut p.train_tree,
            &mut p.dev_src,
            &mut p.dev_tgt,
            &mut p.dev_tree,
            &mut p.test_src,
            &mut p.test_ref,
            &mut p.test_tree,
            &mut p.sawr_cache,
            &mut p.model,
            &mut p.output,
            &mut p.output_b,
            &mut p.alignments,
            &mut p.length_report,
            &mut p.out_dir,
        ] {
            resolve(base, slot);
        }
        for m in &mut p.models {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
    }

    /// Cross-field checks that do not depend on the command.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !self.model.hidden_dim.is_multiple_of(2) {
            return bad(format!(
                "model.hidden_dim = {} must be even: the encoder's two directions each get half",
                self.model.hidden_dim
            ));
        }
        self.model
            .model_config(self.mode)
            .validate()
            .map_err(|e| CliError::Config(format!("[model] {e}")))?;
        self.parser.model.validate().map_err(|e| CliError::Config(format!("[parser.model] {e}")))?;
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        let t = &self.train;
        if t.batch_size == 0 || t.max_src_len == 0 || t.max_tgt_len == 0 {
            return bad("train.batch_size, train.max_src_len and train.max_tgt_len must be positive".into());
        }
        if !(t.lr > 0.0) || !(t.clip > 0.0) {
            return bad("train.lr and train.clip must be positive".into());
        }
        if self.parser.batch_size == 0 || !(self.parser.lr > 0.0) || !(self.parser.clip > 0.0) {
            return bad("parser.batch_size, parser.lr and parser.clip must be positive".into());
        }
        if self.vocab.src_size <= 4 || self.vocab.tgt_size <= 4 || self.parser.vocab_size <= 4 {
            return bad("vocabulary sizes must exceed the 4 reserved symbols".into());
        }
        if self.mode == Mode::TreeRnn && self.vocab.src_bpe_merges > 0 {
            return bad("vocab.src_bpe_merges must be 0 in tree-rnn mode: Tree-GRU nodes are words".into());
        }
        if self.decode.beam == 0 || self.decode.max_len == 0 {
            return bad("decode.beam and decode.max_len must be at least 1".into());
        }
        if self.eval.bootstrap_samples < 100 {
            return bad("eval.bootstrap_samples must be at least 100".into());
        }
        if self.eval.length_edges.windows(2).any(|w| w[0] >= w[1]) {
            return bad("eval.length_edges must be strictly ascending".into());
        }
        Ok(())
    }

    /// The path under `paths.<name>`, or a validation error naming it.
    pub fn require<'a>(&self, name: &str, value: &'a Option<PathBuf>, why: &str) -> CliResult<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("missing required setting `paths.{name}` ({why})")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.model.hidden_dim, 1024);
        assert_eq!(c.model.embed_dim, 512);
        assert_eq!(c.model.sawr_dim, 512);
        assert_eq!(c.train.lr, 5e-4);
        assert_eq!(c.train.clip, 5.0);
        assert_eq!(c.train.batch_size, 80);
        assert_eq!((c.train.max_src_len, c.train.max_tgt_len), (50, 150));
        assert_eq!(c.decode.beam, 5);
        assert_eq!(c.vocab.src_size, 50_000);
        assert_eq!(c.vocab.tgt_bpe_merges, 32_000);
        assert_eq!(c.model.dropout, 0.5);
    }

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_get_suggestions() {
        let e = ExperimentConfig::from_toml("[train]\nlearning_rte = 0.1").unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
        assert!(e.to_string().contains("unknown key `learning_rte` (did you mean `lr`?)"), "{e}");
        let e = ExperimentConfig::from_toml("[train]\nepoch = 3").unwrap_err().to_string();
        assert!(e.contains("did you mean `epochs`"), "{e}");
        let e = ExperimentConfig::from_toml("mdoe = \"sawr\"").unwrap_err().to_string();
        assert!(e.contains("did you mean `mode`"), "{e}");
    }

    #[test]
    fn odd_hidden_size_rejected() {
        let e = ExperimentConfig::from_toml("[model]\nhidden_dim = 7").unwrap_err();
        assert!(e.to_string().contains("hidden_dim"));
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn type_mismatch_is_named() {
        let e = ExperimentConfig::from_toml("[train]\nlr = \"fast\"").unwrap_err().to_string();
        assert!(e.contains("lr") || e.contains("invalid type"), "{e}");
    }

    #[test]
    fn overrides() {
        let mut doc = toml::Table::new();
        let args: Vec<String> =
            ["--train.lr", "0.01", "--mode", "tree-rnn", "--decode.beam=3", "--paths.model", "m.ckpt"]
                .map(String::from)
                .to_vec();
        apply_overrides(&mut doc, &args).unwrap();
        let c = ExperimentConfig::from_table(doc).unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.mode, Mode::TreeRnn);
        assert_eq!(c.decode.beam, 3);
        assert_eq!(c.paths.model.as_deref(), Some(Path::new("m.ckpt")));
        let mut doc = toml::Table::new();
        assert!(apply_overrides(&mut doc, &["--train.lr".to_string()]).is_err());
        assert!(apply_overrides(&mut doc, &["train.lr".to_string(), "1".into()]).is_err());
    }

    #[test]
    fn tree_rnn_rejects_source_bpe() {
        assert!(ExperimentConfig::from_toml("mode = \"tree-rnn\"\n[vocab]\nsrc_bpe_merges = 10").is_err());
        assert!(ExperimentConfig::from_toml("mode = \"tree-linearized\"\n[vocab]\nsrc_bpe_merges = 10").is_ok());
    }
}
