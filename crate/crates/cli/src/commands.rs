//! The pipeline commands. Each reads only the `[paths]` entries it
//! declares and registers everything it writes with the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sawr::data::{
    decode_bpe, filter_and_batch, learn_bpe, read_parallel, read_tokenized, word_counts, BpeModel,
    Vocabulary,
};
use sawr::depparse::{evaluate_las, load_treebank, train_parser_with, DependencyTree, Parser};
use sawr::eval::{bleu, bleu_by_length, bootstrap_significance, dump_alignments, ensemble_decode};
use sawr::nn::checkpoint::file_hash;
use sawr::nn::AdamState;
use sawr::rng;
use sawr::seq2seq::{source_units, SourceInput, SyntaxMode, TrainConfig, Translator};
use sawr::syntax::SawrCache;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, CliResult};
use crate::manifest::{EpochRecord, Recorder};

/// Sentences per parallel work unit for parsing and encoding.
const CHUNK: usize = 32;

const SRC_BPE: &str = "src_bpe";
const TGT_BPE: &str = "tgt_bpe";

/// An input file that must be configured and exist.
fn input<'a>(name: &str, value: &'a Option<PathBuf>, why: &str) -> CliResult<&'a Path> {
    let p = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required setting `paths.{name}` ({why})")))?;
    if !p.is_file() {
        return Err(CliError::Data(format!("paths.{name}: no such file {}", p.display())));
    }
    Ok(p)
}

/// An output location that must be configured; its directory is created.
fn output<'a>(name: &str, value: &'a Option<PathBuf>, why: &str) -> CliResult<&'a Path> {
    let p = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required setting `paths.{name}` ({why})")))?;
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(p)
}

fn read_lines(path: &Path) -> CliResult<Vec<String>> {
    Ok(std::fs::read_to_string(path)?.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).collect())
}

fn write_lines(path: &Path, lines: &[String]) -> CliResult<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn bpe_annotation(bpe: &BpeModel) -> String {
    let mut buf = Vec::new();
    bpe.write(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("merges are UTF-8")
}

fn bpe_from(model: &Translator, key: &str) -> CliResult<Option<BpeModel>> {
    model
        .annotations
        .get(key)
        .map(|s| BpeModel::read(s.as_bytes()))
        .transpose()
        .map_err(|e| CliError::Data(format!("checkpoint annotation `{key}`: {e}")))
}

/// Single-rooted, projective copies of gold trees, checked against the
/// sentences they belong to.
fn load_trees(path: &Path, sentences: &[Vec<String>], name: &str) -> CliResult<Vec<DependencyTree>> {
    let bank = load_treebank(path)?;
    if bank.len() != sentences.len() {
        return Err(CliError::Data(format!(
            "paths.{name} has {} trees for {} sentences",
            bank.len(),
            sentences.len()
        )));
    }
    bank.into_iter()
        .zip(sentences)
        .enumerate()
        .map(|(i, (s, toks))| {
            if &s.tokens != toks {
                return Err(CliError::Data(format!("paths.{name}: tree {} does not match sentence {}", i + 1, i + 1)));
            }
            let mut t = s.tree;
            t.normalize_roots();
            t.projectivize();
            Ok(t)
        })
        .collect()
}

fn parse_all(parser: &Parser, sentences: &[Vec<String>]) -> CliResult<Vec<DependencyTree>> {
    let chunks: Vec<Vec<DependencyTree>> = sentences
        .par_chunks(CHUNK)
        .map(|c| parser.parse_batch(c))
        .collect::<sawr::Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Trees for `sentences` (empty ones get none): from the configured CoNLL
/// file if there is one, otherwise from the parser.
fn trees_for(
    sentences: &[Vec<String>],
    tree_path: Option<&Path>,
    tree_name: &str,
    parser: Option<&Parser>,
) -> CliResult<Vec<Option<DependencyTree>>> {
    if let Some(p) = tree_path {
        return Ok(load_trees(p, sentences, tree_name)?.into_iter().map(Some).collect());
    }
    let parser = parser.ok_or_else(|| {
        CliError::Config(format!("tree modes need `paths.{tree_name}` or `paths.parser` to parse with"))
    })?;
    let nonempty: Vec<Vec<String>> = sentences.iter().filter(|s| !s.is_empty()).cloned().collect();
    let mut parsed = parse_all(parser, &nonempty)?.into_iter();
    Ok(sentences.iter().map(|s| if s.is_empty() { None } else { parsed.next() }).collect())
}

fn tree_path_if_file<'a>(name: &str, value: &'a Option<PathBuf>) -> CliResult<Option<&'a Path>> {
    match value {
        Some(_) => input(name, value, "").map(Some),
        None => Ok(None),
    }
}

/// Prepared inputs; empty sentences become empty inputs.
fn prepare(
    model: &Translator,
    sentences: &[Vec<String>],
    trees: Option<&[Option<DependencyTree>]>,
    bpe: Option<&BpeModel>,
) -> CliResult<Vec<SourceInput>> {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if s.is_empty() {
                return Ok(SourceInput::default());
            }
            let tree = trees.and_then(|t| t[i].as_ref());
            model
                .source_input(s, tree, bpe)
                .map_err(|e| CliError::Data(format!("sentence {}: {e}", i + 1)))
        })
        .collect()
}

/// Fills in parser encodings for a frozen-parser SAWR model, from a cache
/// when one is given (keyed by `lines`, the original line numbers).
fn attach_sawr(
    model: &Translator,
    inputs: &mut [SourceInput],
    cache: Option<(&SawrCache, &Path)>,
    lines: &[usize],
) -> CliResult<()> {
    if model.mode() != SyntaxMode::Sawr || model.parser_trainable() {
        return Ok(());
    }
    if let Some((cache, path)) = cache {
        let dim = model.parser.as_ref().map(|p| p.net.encoding_dim(model.config.sawr_layers)).unwrap_or(0);
        for (input, &line) in inputs.iter_mut().zip(lines) {
            let enc = cache
                .get(line)
                .ok_or_else(|| CliError::Data(format!("{} has no entry for line {}", path.display(), line + 1)))?;
            if enc.rows() != input.parser_ids.len() || enc.cols() != dim {
                return Err(CliError::Data(format!(
                    "{}: line {} is {}x{}, expected {}x{dim}; re-run extract-sawr",
                    path.display(),
                    line + 1,
                    enc.rows(),
                    enc.cols(),
                    input.parser_ids.len()
                )));
            }
            input.sawr = Some(enc.clone());
        }
        return Ok(());
    }
    let encs: Vec<Vec<sawr::Tensor>> = inputs
        .par_chunks(CHUNK)
        .map(|c| model.parser_encodings(&c.iter().collect::<Vec<_>>()))
        .collect::<sawr::Result<_>>()?;
    for (input, enc) in inputs.iter_mut().zip(encs.into_iter().flatten()) {
        input.sawr = Some(std::sync::Arc::new(enc));
    }
    Ok(())
}

/// Detokenized output for a hypothesis' target ids.
fn detok(model: &Translator, ids: &[usize], tgt_bpe: bool) -> String {
    let units = model.tgt_vocab.decode(ids);
    if tgt_bpe { decode_bpe(&units) } else { units }.join(" ")
}

fn translate_all(model: &Translator, inputs: &[SourceInput], beam: usize, max_len: usize) -> CliResult<Vec<String>> {
    let tgt_bpe = model.annotations.contains_key(TGT_BPE);
    inputs
        .par_iter()
        .map(|input| {
            if input.is_empty() {
                return Ok(String::new());
            }
            let hyp =
                if beam == 1 { model.greedy(input, max_len)? } else { model.beam_search(input, beam, max_len)? };
            Ok(detok(model, hyp.output(), tgt_bpe))
        })
        .collect()
}

pub fn train_parser(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let bank_path = input("treebank", &cfg.paths.treebank, "training treebank in CoNLL format")?;
    let dev_path = tree_path_if_file("dev_treebank", &cfg.paths.dev_treebank)?;
    let out = output("parser", &cfg.paths.parser, "where the trained parser is written")?;
    let bank = load_treebank(bank_path)?;
    let dev = dev_path.map(load_treebank).transpose()?;
    let mut clock = Instant::now();
    let mut trace = Vec::new();
    let (parser, summary) = train_parser_with(&bank, &cfg.parser, |epoch, loss, parser| {
        let dev_las = match &dev {
            Some(d) => {
                let sents: Vec<Vec<String>> = d.iter().map(|s| s.tokens.clone()).collect();
                let pred = parse_all(parser, &sents).map_err(|e| sawr::Error::InvalidState(e.to_string()))?;
                let gold: Vec<DependencyTree> = d.iter().map(|s| s.tree.clone()).collect();
                let (_, las) = evaluate_las(&pred, &gold)?;
                log::info!("parser epoch {} dev LAS {:.2}", epoch + 1, 100.0 * las);
                Some(100.0 * las)
            }
            None => None,
        };
        trace.push(EpochRecord {
            epoch: epoch + 1,
            loss,
            dev_las,
            seconds: clock.elapsed().as_secs_f64(),
            ..Default::default()
        });
        clock = Instant::now();
        Ok(())
    })?;
    parser.save(out)?;
    rec.manifest.trace = trace;
    rec.result("sentences", bank.len());
    rec.result("skipped", summary.skipped);
    rec.result("projectivized", summary.projectivized);
    if let Some(las) = rec.manifest.trace.last().and_then(|r| r.dev_las) {
        rec.result("dev_las", las);
        println!("dev LAS {las:.2}");
    }
    rec.artifact("parser", out)
}

pub fn extract_sawr(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let parser_path = input("parser", &cfg.paths.parser, "extract-sawr runs this parser")?;
    let dir = cfg
        .paths
        .sawr_cache
        .as_deref()
        .ok_or_else(|| CliError::Config("missing required setting `paths.sawr_cache` (output directory)".into()))?;
    let splits: Vec<(&str, &Path)> = [
        ("train", "train_src", &cfg.paths.train_src),
        ("dev", "dev_src", &cfg.paths.dev_src),
        ("test", "test_src", &cfg.paths.test_src),
    ]
    .into_iter()
    .filter(|(_, _, v)| v.is_some())
    .map(|(split, name, v)| input(name, v, "").map(|p| (split, p)))
    .collect::<CliResult<_>>()?;
    if splits.is_empty() {
        return Err(CliError::Config(
            "extract-sawr needs at least one of `paths.train_src`, `paths.dev_src`, `paths.test_src`".into(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let parser = Parser::load(parser_path)?;
    let hash = file_hash(parser_path)?;
    for (split, src) in splits {
        let sentences = read_tokenized(src)?;
        let lines: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].is_empty()).collect();
        let chunks: Vec<Vec<sawr::Tensor>> = lines
            .par_chunks(CHUNK)
            .map(|c| {
                let batch: Vec<&Vec<String>> = c.iter().map(|&i| &sentences[i]).collect();
                parser.encode_layers_batch(&batch.into_iter().cloned().collect::<Vec<_>>(), cfg.model.sawr_layers)
            })
            .collect::<sawr::Result<_>>()?;
        let mut cache = SawrCache::new(hash.clone());
        for (&i, enc) in lines.iter().zip(chunks.into_iter().flatten()) {
            cache.insert(i, enc);
        }
        let path = dir.join(format!("{split}.sawr"));
        cache.save(&path)?;
        log::info!("{}: {} sentences", path.display(), cache.len());
        rec.result(split, cache.len());
        rec.artifact(&format!("sawr-{split}"), &path)?;
    }
    Ok(())
}

/// A side of the parallel data after length filtering.
struct Split {
    total: usize,
    lines: Vec<usize>,
    src: Vec<Vec<String>>,
    tgt: Vec<Vec<String>>,
    trees: Option<Vec<Option<DependencyTree>>>,
}

fn load_split(
    src: &Path,
    tgt: &Path,
    tree: Option<&Path>,
    tree_name: &str,
    keep: impl Fn(&[String], &[String]) -> bool,
    needs_tree: bool,
    parser: Option<&Parser>,
) -> CliResult<Split> {
    let pairs = read_parallel(src, tgt)?;
    let lines: Vec<usize> = (0..pairs.len()).filter(|&i| keep(&pairs[i].0, &pairs[i].1)).collect();
    let all_src: Vec<Vec<String>> = pairs.iter().map(|p| p.0.clone()).collect();
    let trees = if needs_tree {
        let trees = match tree {
            Some(p) => load_trees(p, &all_src, tree_name)?.into_iter().map(Some).collect(),
            None => {
                let kept: Vec<Vec<String>> = lines.iter().map(|&i| all_src[i].clone()).collect();
                let mut all = vec![None; pairs.len()];
                for (&i, t) in lines.iter().zip(trees_for(&kept, None, tree_name, parser)?) {
                    all[i] = t;
                }
                all
            }
        };
        Some(lines.iter().map(|&i| trees[i].clone()).collect())
    } else {
        None
    };
    Ok(Split {
        total: pairs.len(),
        src: lines.iter().map(|&i| pairs[i].0.clone()).collect(),
        tgt: lines.iter().map(|&i| pairs[i].1.clone()).collect(),
        lines,
        trees,
    })
}

fn load_cache(cfg: &ExperimentConfig, split: &str, parser_hash: &str) -> CliResult<Option<(SawrCache, PathBuf)>> {
    let Some(dir) = &cfg.paths.sawr_cache else { return Ok(None) };
    let path = dir.join(format!("{split}.sawr"));
    if !path.is_file() {
        log::info!("{} not found; encoding with the parser", path.display());
        return Ok(None);
    }
    Ok(Some((SawrCache::load(&path, parser_hash)?, path)))
}

pub fn train_nmt(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let p = &cfg.paths;
    let syntax = cfg.mode.syntax();
    let train_src = input("train_src", &p.train_src, "training source text")?;
    let train_tgt = input("train_tgt", &p.train_tgt, "training target text")?;
    let dev_src = input("dev_src", &p.dev_src, "dev source text for checkpoint selection")?;
    let dev_tgt = input("dev_tgt", &p.dev_tgt, "dev references for checkpoint selection")?;
    let train_tree = tree_path_if_file("train_tree", &p.train_tree)?;
    let dev_tree = tree_path_if_file("dev_tree", &p.dev_tree)?;
    let model_out = output("model", &p.model, "where the selected checkpoint is written")?;
    let needs_parser =
        syntax == SyntaxMode::Sawr || (syntax.needs_tree() && (train_tree.is_none() || dev_tree.is_none()));
    let parser_path = if needs_parser {
        let why = match cfg.mode {
            Mode::Sawr | Mode::SawrTuned => format!("mode {} needs a trained parser", cfg.mode.name()),
            _ => format!("mode {} needs source trees: set the tree files or a parser", cfg.mode.name()),
        };
        Some(input("parser", &p.parser, &why)?)
    } else {
        None
    };
    let parser = parser_path.map(Parser::load).transpose()?;

    let t = &cfg.train;
    let within = |s: &[String], g: &[String]| !s.is_empty() && !g.is_empty() && s.len() <= t.max_src_len && g.len() <= t.max_tgt_len;
    let train = load_split(train_src, train_tgt, train_tree, "train_tree", within, syntax.needs_tree(), parser.as_ref())?;
    if train.src.is_empty() {
        return Err(CliError::Data("no training pairs within the length limits".into()));
    }
    let dev = load_split(dev_src, dev_tgt, dev_tree, "dev_tree", |s, _| !s.is_empty(), syntax.needs_tree(), parser.as_ref())?;
    let dev_refs: Vec<String> = dev.tgt.iter().map(|s| s.join(" ")).collect();
    log::info!("{} training pairs kept of {}", train.src.len(), train.total);

    let src_bpe = (cfg.vocab.src_bpe_merges > 0).then(|| learn_bpe(&word_counts(&train.src), cfg.vocab.src_bpe_merges));
    let tgt_bpe = (cfg.vocab.tgt_bpe_merges > 0).then(|| learn_bpe(&word_counts(&train.tgt), cfg.vocab.tgt_bpe_merges));
    let src_units: Vec<Vec<String>> = train
        .src
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tree = train.trees.as_ref().and_then(|t| t[i].as_ref());
            source_units(syntax, s, tree, src_bpe.as_ref())
                .map_err(|e| CliError::Data(format!("training sentence {}: {e}", train.lines[i] + 1)))
        })
        .collect::<CliResult<_>>()?;
    let tgt_units: Vec<Vec<String>> = train
        .tgt
        .iter()
        .map(|s| tgt_bpe.as_ref().map_or_else(|| s.clone(), |b| b.apply(s)))
        .collect();
    let src_vocab = Vocabulary::build(&src_units, cfg.vocab.src_size)?;
    let tgt_vocab = Vocabulary::build(&tgt_units, cfg.vocab.tgt_size)?;

    let mut model =
        Translator::new(cfg.model.model_config(cfg.mode), src_vocab, tgt_vocab, parser.as_ref(), cfg.seed)?;
    if cfg.mode == Mode::SawrTuned {
        model.set_parser_trainable(true)?;
    }
    if let Some(b) = &src_bpe {
        model.annotations.insert(SRC_BPE.into(), bpe_annotation(b));
    }
    if let Some(b) = &tgt_bpe {
        model.annotations.insert(TGT_BPE.into(), bpe_annotation(b));
    }
    model.annotations.insert("mode".into(), cfg.mode.name().into());

    let mut sources = prepare(&model, &train.src, train.trees.as_deref(), src_bpe.as_ref())?;
    let mut dev_inputs = prepare(&model, &dev.src, dev.trees.as_deref(), src_bpe.as_ref())?;
    if let Some(pp) = parser_path.filter(|_| cfg.mode == Mode::Sawr) {
        let hash = file_hash(pp)?;
        let train_cache = load_cache(cfg, "train", &hash)?;
        let dev_cache = load_cache(cfg, "dev", &hash)?;
        attach_sawr(&model, &mut sources, train_cache.as_ref().map(|(c, p)| (c, p.as_path())), &train.lines)?;
        attach_sawr(&model, &mut dev_inputs, dev_cache.as_ref().map(|(c, p)| (c, p.as_path())), &dev.lines)?;
    }
    let targets: Vec<Vec<usize>> = tgt_units.iter().map(|u| model.tgt_vocab.encode(u)).collect();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> =
        sources.iter().zip(&targets).map(|(s, t)| (s.ids.clone(), t.clone())).collect();

    let tc = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        lr: t.lr,
        clip: t.clip,
        max_src_len: t.max_src_len,
        max_tgt_len: t.max_tgt_len,
        seed: cfg.seed,
    };
    let mut adam = AdamState::new();
    let mut step = 0u64;
    let (mut best, mut best_epoch, mut stale) = (f64::NEG_INFINITY, 0, 0);
    for epoch in 0..t.epochs {
        let clock = Instant::now();
        // Limits were applied to words above; units may be longer.
        let batches = filter_and_batch(&pairs, usize::MAX, usize::MAX, t.batch_size, rng::derive_index(cfg.seed, epoch as u64))?;
        let loss = sawr::seq2seq::train_epoch(&mut model, &sources, &targets, &batches, &mut adam, &tc, &mut step)?;
        let hyps = translate_all(&model, &dev_inputs, 1, cfg.decode.max_len)?;
        let dev_bleu = bleu(&hyps, &dev_refs, cfg.eval.case_sensitive)?.bleu;
        log::info!("epoch {} loss {loss:.4} dev BLEU {dev_bleu:.2}", epoch + 1);
        if dev_bleu > best {
            best = dev_bleu;
            best_epoch = epoch + 1;
            stale = 0;
            model.save(model_out)?;
        } else {
            stale += 1;
        }
        rec.manifest.trace.push(EpochRecord {
            epoch: epoch + 1,
            loss,
            dev_bleu: Some(dev_bleu),
            seconds: clock.elapsed().as_secs_f64(),
            ..Default::default()
        });
        if t.patience > 0 && stale >= t.patience {
            log::info!("no dev gain for {stale} epochs, stopping");
            break;
        }
    }
    if best_epoch == 0 {
        return Err(CliError::Config("train.epochs must be at least 1".into()));
    }
    println!("best dev BLEU {best:.2} at epoch {best_epoch}");
    rec.result("train_pairs", train.src.len());
    rec.result("best_epoch", best_epoch);
    rec.result("best_dev_bleu", best);
    rec.artifact("model", model_out)
}

/// Inputs for `model` over the test sources.
fn test_inputs(cfg: &ExperimentConfig, model: &Translator, sentences: &[Vec<String>]) -> CliResult<Vec<SourceInput>> {
    let trees = if model.mode().needs_tree() {
        let tree_path = tree_path_if_file("test_tree", &cfg.paths.test_tree)?;
        let parser = match tree_path {
            Some(_) => None,
            None => Some(Parser::load(input(
                "parser",
                &cfg.paths.parser,
                "tree-mode models need `paths.test_tree` or a parser",
            )?)?),
        };
        Some(trees_for(sentences, tree_path, "test_tree", parser.as_ref())?)
    } else {
        None
    };
    let bpe = bpe_from(model, SRC_BPE)?;
    prepare(model, sentences, trees.as_deref(), bpe.as_ref())
}

pub fn translate(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let model_path = input("model", &cfg.paths.model, "translator checkpoint")?;
    let src = input("test_src", &cfg.paths.test_src, "sentences to translate")?;
    let out = output("output", &cfg.paths.output, "where translations are written")?;
    let model = Translator::load(model_path)?;
    let sentences = read_tokenized(src)?;
    let inputs = test_inputs(cfg, &model, &sentences)?;
    let hyps = translate_all(&model, &inputs, cfg.decode.beam, cfg.decode.max_len)?;
    write_lines(out, &hyps)?;
    rec.result("sentences", hyps.len());
    rec.artifact("translations", out)
}

pub fn ensemble_translate(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    if cfg.paths.models.is_empty() {
        return Err(CliError::Config("missing required setting `paths.models` (ensemble checkpoints)".into()));
    }
    let src = input("test_src", &cfg.paths.test_src, "sentences to translate")?;
    let out = output("output", &cfg.paths.output, "where translations are written")?;
    let models = cfg
        .paths
        .models
        .iter()
        .map(|m| {
            if !m.is_file() {
                return Err(CliError::Data(format!("paths.models: no such file {}", m.display())));
            }
            Ok(Translator::load(m)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let first = &models[0];
    if models.iter().any(|m| m.annotations.get(TGT_BPE) != first.annotations.get(TGT_BPE)) {
        return Err(CliError::Data("ensemble members use different target BPE merges".into()));
    }
    let sentences = read_tokenized(src)?;
    let inputs = models.iter().map(|m| test_inputs(cfg, m, &sentences)).collect::<CliResult<Vec<_>>>()?;
    let tgt_bpe = first.annotations.contains_key(TGT_BPE);
    let hyps: Vec<String> = (0..sentences.len())
        .into_par_iter()
        .map(|i| {
            if sentences[i].is_empty() {
                return Ok(String::new());
            }
            let members: Vec<(&Translator, &SourceInput)> = models.iter().zip(&inputs).map(|(m, x)| (m, &x[i])).collect();
            let hyp = ensemble_decode(&members, cfg.decode.beam, cfg.decode.max_len)?;
            Ok(detok(first, hyp.output(), tgt_bpe))
        })
        .collect::<CliResult<_>>()?;
    write_lines(out, &hyps)?;
    rec.result("members", models.len());
    rec.result("sentences", hyps.len());
    rec.artifact("translations", out)
}

fn hyps_and_refs(cfg: &ExperimentConfig) -> CliResult<(Vec<String>, Vec<String>)> {
    let hyp = input("output", &cfg.paths.output, "translations to score")?;
    let r = input("test_ref", &cfg.paths.test_ref, "reference translations")?;
    let (hyps, refs) = (read_lines(hyp)?, read_lines(r)?);
    if hyps.len() != refs.len() {
        return Err(CliError::Data(format!("{} hypotheses for {} references", hyps.len(), refs.len())));
    }
    Ok((hyps, refs))
}

pub fn evaluate(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let (hyps, refs) = hyps_and_refs(cfg)?;
    let report = bleu(&hyps, &refs, cfg.eval.case_sensitive)?;
    println!("{report}");
    rec.result("bleu", report.bleu);
    rec.result("report", report.to_string());
    Ok(())
}

pub fn significance(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let (a, refs) = hyps_and_refs(cfg)?;
    let b = read_lines(input("output_b", &cfg.paths.output_b, "second system's translations")?)?;
    if b.len() != refs.len() {
        return Err(CliError::Data(format!("{} hypotheses in output_b for {} references", b.len(), refs.len())));
    }
    let r = bootstrap_significance(&a, &b, &refs, cfg.eval.bootstrap_samples, cfg.seed, cfg.eval.case_sensitive)?;
    println!(
        "A {:.2}  B {:.2}  wins A {} B {} ties {}  p = {:.4}",
        r.bleu_a, r.bleu_b, r.wins_a, r.wins_b, r.ties, r.p_value
    );
    rec.result("bootstrap", &r);
    Ok(())
}

pub fn align_dump(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let model_path = input("model", &cfg.paths.model, "translator checkpoint")?;
    let src = input("test_src", &cfg.paths.test_src, "sentences to align")?;
    let out = output("alignments", &cfg.paths.alignments, "JSON-lines attention dump")?;
    let model = Translator::load(model_path)?;
    let inputs = test_inputs(cfg, &model, &read_tokenized(src)?)?;
    let file = std::fs::File::create(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let n = dump_alignments(&model, &inputs, cfg.decode.max_len, &mut w)?;
    std::io::Write::flush(&mut w)?;
    rec.result("records", n);
    rec.artifact("alignments", out)
}

pub fn length_report(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let (a, refs) = hyps_and_refs(cfg)?;
    let src = read_lines(input("test_src", &cfg.paths.test_src, "source lengths define the bins")?)?;
    let out = output("length_report", &cfg.paths.length_report, "tab-separated output")?;
    let b = match &cfg.paths.output_b {
        Some(_) => Some(read_lines(input("output_b", &cfg.paths.output_b, "")?)?),
        None => None,
    };
    let edges = &cfg.eval.length_edges;
    let cs = cfg.eval.case_sensitive;
    let bins_a = bleu_by_length(&a, &refs, &src, edges, cs)?;
    let bins_b = b.as_ref().map(|b| bleu_by_length(b, &refs, &src, edges, cs)).transpose()?;
    let fmt = |r: &Option<sawr::eval::BleuReport>| r.as_ref().map_or("nan".to_string(), |r| format!("{:.2}", r.bleu));
    let mut rows = vec![if bins_b.is_some() { "lower\tupper\tsentences\tbleu_a\tbleu_b" } else { "lower\tupper\tsentences\tbleu" }.to_string()];
    for (k, bin) in bins_a.iter().enumerate() {
        let upper = bin.upper.map_or("inf".to_string(), |u| u.to_string());
        let mut row = format!("{}\t{upper}\t{}\t{}", bin.lower, bin.sentences, fmt(&bin.report));
        if let Some(bb) = &bins_b {
            row.push('\t');
            row.push_str(&fmt(&bb[k].report));
        }
        rows.push(row);
    }
    write_lines(out, &rows)?;
    print!("{}", rows.join("\n") + "\n");
    rec.result("bins", bins_a.len());
    rec.artifact("length-report", out)
}
