//! `evpirank`: command-line front end for the clarification-question ranking
//! pipeline.

mod commands;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evpirank_core::config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "evpirank",
    version,
    about = "Rank clarification questions by expected value of perfect information"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Per-key override, applied after the config file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root seed; overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "EVPIRANK_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract (post, question, answer) triples from a forum dump.
    Ingest(commands::IngestArgs),
    /// Build TF-IDF candidate sets from triples.
    Candidates(commands::CandidatesArgs),
    /// Train a model on candidate sets and write a checkpoint.
    Train(commands::TrainArgs),
    /// Rank every candidate set with a trained model.
    Rank(commands::RankArgs),
    /// Score rankings against labels.
    Evaluate(commands::EvaluateArgs),
    /// Paired bootstrap test between two rankings files.
    Significance(commands::SignificanceArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(commands::GradcheckArgs),
    /// Write a synthetic forum dump and word vectors.
    Synth(commands::SynthArgs),
    /// Inter-annotator agreement (Cohen's kappa).
    Agreement(commands::AgreementArgs),
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, bad config or missing input files: exit 2.
    Usage(anyhow::Error),
    /// Anything that goes wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

/// Opens an input file; a missing or unreadable file is a usage error.
pub fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("cannot open `{}`: {e}", path.display())))
}

/// Creates an output file, making parent directories as needed.
pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Runtime(anyhow::anyhow!("cannot create `{}`: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(anyhow::anyhow!("cannot create `{}`: {e}", path.display())))
}

pub fn finish<W: Write>(mut w: W) -> CmdResult {
    w.flush()?;
    Ok(())
}

impl GlobalArgs {
    /// Resolves the config file, overrides and seed flag, and logs the result.
    pub fn config(&self) -> Result<Config, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config `{}`: {e}", path.display())))?;
                Config::parse(&text).map_err(|e| usage(format!("config `{}`: {e}", path.display())))?
            }
            None => Config::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o).map_err(|e| usage(format!("--set {o}: {e}")))?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        log::info!("resolved config:\n{}", cfg.to_text().trim_end());
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(g, a),
        Command::Candidates(a) => commands::candidates(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Rank(a) => commands::rank(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::Significance(a) => commands::significance(g, a),
        Command::Gradcheck(a) => commands::gradcheck(g, a),
        Command::Synth(a) => commands::synth(g, a),
        Command::Agreement(a) => commands::agreement(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
