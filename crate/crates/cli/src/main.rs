//! `synthq`: synthetic multi-query generation, diversity measurement,
//! complexity-weighted training and evaluation for dense retrieval.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{CorrelateArgs, EvalArgs, GenerateArgs, MeasureArgs, ReportArgs, TrainArgs, WeightArgs};
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "synthq", version, about = "Synthetic queries, diversity metrics and weighted retriever training")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate M queries per document with an LLM.
    Generate(GenerateArgs),
    /// Compute Dist-Sim, Len-Sim, CE and Self-BLEU for query sets.
    Measure(MeasureArgs),
    /// Annotate pairs with content-word counts and preview weights.
    Weight(WeightArgs),
    /// Train the retriever with weighted InfoNCE.
    Train(TrainArgs),
    /// Score a checkpoint with NDCG@k.
    Eval(EvalArgs),
    /// Correlate content-word counts with retrieval gains.
    Correlate(CorrelateArgs),
    /// Convert a stored JSON report to CSV or JSON.
    Report(ReportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::generate(cfg, a),
        Command::Measure(a) => commands::measure_cmd(cfg, a),
        Command::Weight(a) => commands::weight(cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Eval(a) => commands::eval(cfg, a),
        Command::Correlate(a) => commands::correlate(cfg, a),
        Command::Report(a) => commands::report(a),
    }
}

/// One-line cause chain. Sources already quoted by their parent are skipped.
fn one_line(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut prev = out.clone();
    for cause in e.chain().skip(1) {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            out.push_str(": ");
            out.push_str(&msg);
        }
        prev = msg;
    }
    out.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(1)
        }
    }
}
