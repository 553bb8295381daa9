//! Command-line front end: `sawr <command> [--config FILE] [--section.key VALUE ...]`.
//!
//! Every command loads an [`ExperimentConfig`], applies the overrides,
//! validates, does its work inside a thread pool of `threads` workers and
//! appends a [`RunManifest`] line to `paths.out_dir/manifest.jsonl`.
//!
//! Exit status: 0 success, 1 invalid configuration, 2 data error, 3 runtime
//! failure.

// NaN settings must fail validation, hence `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, Mode};
pub use error::{CliError, CliResult};
pub use manifest::{read_manifest, RunManifest, MANIFEST_FILE};

#[derive(Parser, Debug)]
#[command(name = "sawr", version, about = "Syntax-aware NMT experiments")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML experiment configuration; relative paths inside it are resolved
    /// against its directory.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Setting overrides, e.g. `--train.lr 0.001 --mode sawr`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the dependency parser on `paths.treebank`.
    TrainParser(RunArgs),
    /// Cache parser encodings of the configured source files.
    ExtractSawr(RunArgs),
    /// Train a translator in the configured mode.
    TrainNmt(RunArgs),
    /// Beam-search translation of `paths.test_src`.
    Translate(RunArgs),
    /// Translate with the ensemble in `paths.models`.
    EnsembleTranslate(RunArgs),
    /// Corpus BLEU of `paths.output` against `paths.test_ref`.
    Evaluate(RunArgs),
    /// Paired bootstrap test of `paths.output` against `paths.output_b`.
    Significance(RunArgs),
    /// Attention matrices of greedy translations as JSON lines.
    AlignDump(RunArgs),
    /// BLEU by source-length bin as a TSV file.
    LengthReport(RunArgs),
    /// Print the resolved configuration.
    ShowConfig(RunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainParser(_) => "train-parser",
            Command::ExtractSawr(_) => "extract-sawr",
            Command::TrainNmt(_) => "train-nmt",
            Command::Translate(_) => "translate",
            Command::EnsembleTranslate(_) => "ensemble-translate",
            Command::Evaluate(_) => "evaluate",
            Command::Significance(_) => "significance",
            Command::AlignDump(_) => "align-dump",
            Command::LengthReport(_) => "length-report",
            Command::ShowConfig(_) => "show-config",
        }
    }

    fn args_mut(&mut self) -> &mut RunArgs {
        match self {
            Command::TrainParser(a)
            | Command::ExtractSawr(a)
            | Command::TrainNmt(a)
            | Command::Translate(a)
            | Command::EnsembleTranslate(a)
            | Command::Evaluate(a)
            | Command::Significance(a)
            | Command::AlignDump(a)
            | Command::LengthReport(a)
            | Command::ShowConfig(a) => a,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::TrainParser(a)
            | Command::ExtractSawr(a)
            | Command::TrainNmt(a)
            | Command::Translate(a)
            | Command::EnsembleTranslate(a)
            | Command::Evaluate(a)
            | Command::Significance(a)
            | Command::AlignDump(a)
            | Command::LengthReport(a)
            | Command::ShowConfig(a) => a,
        }
    }
}

/// Runs one parsed command and returns the manifest entry it appended.
pub fn execute(command: &Command) -> CliResult<Option<RunManifest>> {
    let args = command.args();
    let cfg = ExperimentConfig::load(args.config.as_deref(), &args.overrides)?;
    if let Command::ShowConfig(_) = command {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let mut rec = manifest::Recorder::start(command.name(), cfg.to_toml());
    pool.install(|| match command {
        Command::TrainParser(_) => commands::train_parser(&cfg, &mut rec),
        Command::ExtractSawr(_) => commands::extract_sawr(&cfg, &mut rec),
        Command::TrainNmt(_) => commands::train_nmt(&cfg, &mut rec),
        Command::Translate(_) => commands::translate(&cfg, &mut rec),
        Command::EnsembleTranslate(_) => commands::ensemble_translate(&cfg, &mut rec),
        Command::Evaluate(_) => commands::evaluate(&cfg, &mut rec),
        Command::Significance(_) => commands::significance(&cfg, &mut rec),
        Command::AlignDump(_) => commands::align_dump(&cfg, &mut rec),
        Command::LengthReport(_) => commands::length_report(&cfg, &mut rec),
        Command::ShowConfig(_) => unreachable!("handled above"),
    })?;
    let dir = cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    rec.finish(&dir).map(Some)
}

/// Parses `argv` (program name first), runs it and returns the exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    // `-v` given after the first override lands in the override list.
    let args = cli.command.args_mut();
    args.overrides.retain(|a| match a.as_str() {
        "-v" | "--verbose" => {
            cli.verbose += 1;
            false
        }
        "-vv" => {
            cli.verbose += 2;
            false
        }
        _ => true,
    });
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli.command) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("sawr {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
