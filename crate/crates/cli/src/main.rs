use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use csranker_cli::commands::{self, Outcome};
use csranker_cli::config::{RawConfig, RunConfig};
use csranker_cli::error::CliError;

/// Cost-sensitive ramp-loss PSM rescoring.
///
/// Exit codes: 0 success, 2 bad configuration, 3 bad or unreadable data,
/// 4 finished with a numeric warning (solver did not converge).
#[derive(Parser)]
#[command(name = "csranker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key = value config file; flags below override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,
    /// Comma-separated FDR levels; the first drives acceptance
    #[arg(long, global = true)]
    fdr: Option<String>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Score file, repeat for overlap (eval)
    #[arg(long, global = true)]
    scores: Vec<PathBuf>,
    /// Any config key, as key=value; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic PSM table with a train/test split
    Synth,
    /// Train a discriminant on the training split
    Train,
    /// Score every PSM with a trained model
    Score,
    /// FDR report, ROC curves and acceptance overlap from score files
    Eval,
    /// Repeated training with shuffled order, per solver
    Bench,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Online,
    Batch,
}

fn path_str(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for a in &cli.set {
        raw.set_assignment(a)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("seed", &seed.to_string(), "--seed")?;
    }
    if let Some(out) = &cli.out {
        raw.set("out", &path_str(out), "--out")?;
    }
    if let Some(s) = cli.solver {
        let name = match s {
            SolverArg::Online => "online",
            SolverArg::Batch => "batch",
        };
        raw.set("solver", name, "--solver")?;
    }
    if let Some(fdr) = &cli.fdr {
        raw.set("target_fdr", fdr, "--fdr")?;
    }
    if let Some(data) = &cli.data {
        raw.set("data", &path_str(data), "--data")?;
    }
    if let Some(model) = &cli.model {
        raw.set("model", &path_str(model), "--model")?;
    }
    if !cli.scores.is_empty() {
        let joined: Vec<String> = cli.scores.iter().map(|p| path_str(p)).collect();
        raw.set("scores", &joined.join(","), "--scores")?;
    }
    RunConfig::resolve(&raw)
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Score => commands::score_cmd(&cfg),
        Command::Eval => commands::eval_cmd(&cfg),
        Command::Bench => commands::bench_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            if outcome.numeric_warning {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
