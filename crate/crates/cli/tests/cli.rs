use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sawr_cli::read_manifest;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn sawr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sawr")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs a command against the toy config, writing into `dir`.
fn run(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let cfg = toy().join("toy.toml");
    let out_dir = dir.to_str().unwrap();
    let mut args = vec![cmd, "-c", cfg.to_str().unwrap(), "--paths.out_dir", out_dir, "--train.epochs", "6"];
    args.extend_from_slice(extra);
    sawr(&args)
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    o
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn toy_pipeline_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    let parser = p(d, "parser.ckpt");
    ok(run(d, "train-parser", &["--paths.parser", &parser]));
    ok(run(d, "extract-sawr", &["--paths.parser", &parser, "--paths.sawr_cache", &p(d, "cache")]));
    let model = p(d, "sawr.ckpt");
    ok(run(
        d,
        "train-nmt",
        &["--train.epochs", "15", "--mode", "sawr", "--paths.parser", &parser, "--paths.sawr_cache", &p(d, "cache"), "--paths.model", &model],
    ));
    ok(run(d, "translate", &["--paths.model", &model, "--paths.output", &p(d, "out.txt")]));
    let eval = ok(run(d, "evaluate", &["--paths.output", &p(d, "out.txt")]));
    assert!(String::from_utf8_lossy(&eval.stdout).starts_with("BLEU = "));

    let runs = read_manifest(&d.join("manifest.jsonl")).unwrap();
    let names: Vec<&str> = runs.iter().map(|r| r.command.as_str()).collect();
    assert_eq!(names, ["train-parser", "extract-sawr", "train-nmt", "translate", "evaluate"]);
    assert_eq!(runs[0].trace.len(), 5);
    assert!(runs[0].trace.iter().all(|e| e.dev_las.is_some()));
    assert_eq!(runs[2].trace.len(), 15);
    assert!(runs[2].trace.iter().all(|e| e.dev_bleu.is_some() && e.seconds >= 0.0));
    let best = runs[2].results["best_epoch"].as_u64().unwrap() as usize;
    let best_bleu = runs[2].trace.iter().map(|e| e.dev_bleu.unwrap()).fold(f64::MIN, f64::max);
    assert_eq!(runs[2].trace[best - 1].dev_bleu.unwrap(), best_bleu);
    assert!(runs[4].results["bleu"].as_f64().unwrap() > 0.0);
    assert!(runs[2].config.contains("mode = \"sawr\""));

    // each artifact appears in one entry, with the hash of what is on disk
    let mut seen = std::collections::HashSet::new();
    for a in runs.iter().flat_map(|r| &r.artifacts) {
        assert!(seen.insert(a.path.clone()), "{} listed twice", a.path.display());
        assert_eq!(a.sha256, sawr::nn::checkpoint::file_hash(&a.path).unwrap());
    }
    assert_eq!(seen.len(), 6);
}

#[test]
fn identical_runs_have_identical_loss_traces() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    let args = ["--mode", "tree-linearized", "--threads", "1", "--train.epochs", "3"];
    for k in 0..2 {
        let model = p(d, &format!("m{k}.ckpt"));
        let mut a = args.to_vec();
        a.extend(["--paths.model", model.as_str()]);
        ok(run(d, "train-nmt", &a));
    }
    let runs = read_manifest(&d.join("manifest.jsonl")).unwrap();
    let trace = |k: usize| runs[k].trace.iter().map(|e| (e.loss, e.dev_bleu)).collect::<Vec<_>>();
    assert_eq!(trace(0), trace(1));
    assert_eq!(runs[0].artifacts[0].sha256, runs[1].artifacts[0].sha256);
}

#[test]
fn ensemble_of_copies_matches_single_model() {
    let d = tempfile::tempdir().unwrap();
    let d = d.path();
    let model = p(d, "m.ckpt");
    ok(run(d, "train-nmt", &["--train.epochs", "2", "--paths.model", &model]));
    ok(run(d, "translate", &["--paths.model", &model, "--paths.output", &p(d, "single.txt")]));
    let list = format!("['{model}', '{model}', '{model}']");
    ok(run(d, "ensemble-translate", &["--paths.models", &list, "--paths.output", &p(d, "ens.txt")]));
    let single = std::fs::read(d.join("single.txt")).unwrap();
    assert_eq!(single, std::fs::read(d.join("ens.txt")).unwrap());

    ok(run(d, "significance", &["--paths.output", &p(d, "single.txt"), "--paths.output_b", &p(d, "ens.txt")]));
    ok(run(d, "align-dump", &["--paths.model", &model, "--paths.alignments", &p(d, "a.jsonl")]));
    let lines = std::fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 40);
    ok(run(
        d,
        "length-report",
        &["--paths.output", &p(d, "single.txt"), "--paths.length_report", &p(d, "len.tsv")],
    ));
    let tsv = std::fs::read_to_string(d.join("len.tsv")).unwrap();
    assert_eq!(tsv.lines().next(), Some("lower\tupper\tsentences\tbleu"));
    assert_eq!(tsv.lines().count(), 7);
}

#[test]
fn sawr_without_parser_names_the_field() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "train-nmt", &["--mode", "sawr", "--paths.model", &p(d.path(), "m.ckpt")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("paths.parser"), "{}", stderr(&o));
    assert!(!d.path().join("m.ckpt").exists());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), "train-nmt", &["--train.learning_rte", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("did you mean `lr`"), "{}", stderr(&o));

    let o = run(d.path(), "train-nmt", &["--model.hidden_dim", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hidden_dim"));

    let o = run(d.path(), "translate", &["--paths.model", &p(d.path(), "absent.ckpt"), "--paths.output", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths.model"));

    let garbage = d.path().join("bad.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let o = run(d.path(), "translate", &["--paths.model", garbage.to_str().unwrap(), "--paths.output", &p(d.path(), "o")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    assert_eq!(sawr(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn empty_config_shows_defaults() {
    let o = ok(sawr(&["show-config"]));
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg: sawr_cli::ExperimentConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg.model.hidden_dim, 1024);
    assert_eq!(cfg.decode.beam, 5);
    let o = ok(sawr(&["show-config", "--decode.beam", "3", "--mode", "tree-rnn"]));
    assert!(String::from_utf8(o.stdout).unwrap().contains("beam = 3"));
}
