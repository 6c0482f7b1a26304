mod backend;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use arena_core::game::{ChompOrientation, GameKind, PlayConvention};
use clap::{Args, Parser, Subcommand};

use backend::BackendArgs;

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Exact game solvers and LLM decision pipelines on impartial games")]
struct Cli {
    /// Directory of prompt templates replacing the built-in catalog.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label a position and list its optimal moves.
    Solve(SolveArgs),
    /// Compare enumerated Kayles values with the quoted shortcuts.
    KaylesAudit {
        #[arg(long, default_value_t = 20)]
        n_max: u32,
    },
    /// Generate labeled decision states.
    DatasetGen(DatasetGenArgs),
    /// Score an agent's action accuracy on a dataset.
    DatasetEval(DatasetEvalArgs),
    /// Play seeded episodes between two agents on a preset.
    Simulate(SimulateArgs),
    /// Measure consistency and bias shift across debates on one state.
    BiasAnalyze(BiasArgs),
    /// Accuracy against knowledge and diversification temperature.
    SweepTemp(SweepArgs),
    /// Combine report.json files into tables.
    Report(ReportArgs),
    /// List the simulator presets.
    Presets,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    game: Option<GameKind>,
    /// Nim piles, comma separated.
    #[arg(long)]
    piles: Option<String>,
    /// Largest Nim take; defaults to the largest pile.
    #[arg(long)]
    max_take: Option<u32>,
    /// Fibonacci stones left.
    #[arg(long)]
    remaining: Option<u32>,
    /// Fibonacci take cap; defaults to the opening cap.
    #[arg(long)]
    cap: Option<u32>,
    /// Kayles rows as binary strings separated by `|` or spaces.
    #[arg(long)]
    rows: Option<String>,
    /// Full Chomp grid as ROWSxCOLS.
    #[arg(long)]
    grid: Option<String>,
    /// A full state as JSON instead of the game flags.
    #[arg(long, conflicts_with_all = ["game", "piles", "remaining", "rows", "grid"])]
    state: Option<String>,
    #[arg(long)]
    convention: Option<PlayConvention>,
    #[arg(long, value_parser = commands::parse_orientation, default_value = "top_left")]
    orientation: ChompOrientation,
}

#[derive(Debug, Args)]
#[group(id = "dataset_flags", multiple = true)]
struct DatasetFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    include_losing: bool,
}

#[derive(Debug, Args)]
struct DatasetGenArgs {
    /// A dataset spec document.
    #[arg(long, conflicts_with = "dataset_flags")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: DatasetFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "eval_flags", multiple = true)]
struct EvalFlags {
    /// oracle, random, or a reasoner: standard, react, cot,
    /// self_consistency, self_refinement, mad, dreamad, dreamad_minus.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DatasetEvalArgs {
    #[arg(long, conflicts_with = "eval_flags")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: EvalFlags,
    /// Dataset JSONL; generated from the config when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "sim_flags", multiple = true)]
struct SimFlags {
    #[arg(long)]
    preset: Option<String>,
    /// oracle, random, or a reasoner: standard, react, cot,
    /// self_consistency, self_refinement, mad, dreamad, dreamad_minus.
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    opponent: Option<String>,
    #[arg(long)]
    opponent_model: Option<String>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_plies: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "sim_flags")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: SimFlags,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BiasArgs {
    /// A bias-analysis config document; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Debate logs (JSONL) to analyze instead of running debates.
    #[arg(long)]
    logs: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run directories or report.json files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            eprintln!("{}", serde_json::json!({"error": "usage", "message": text.trim_start_matches("error: ")}));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": "failed", "message": format!("{e:#}")}));
            ExitCode::FAILURE
        }
    }
}
