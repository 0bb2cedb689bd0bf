use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rglasso_cli::{replay, run, CliError, ExperimentConfig, RunOptions, RunReport, Task};

#[derive(Parser)]
#[command(name = "rglasso", version, about = "Robust Glasso experiments: influence functions, sensitivity curves, efficiencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Glasso for the plug-in covariance of the model or a data file
    Solve(RunArgs),
    /// Glasso influence function over a grid of contamination points
    IfSurface(RunArgs),
    /// Mean finite-sample sensitivity curves over a grid
    ScSurface(RunArgs),
    /// Plug-in influence norms along rays, to probe gross-error sensitivity
    GesScan(RunArgs),
    /// Worst-case contamination direction of the unpenalised classical Glasso
    MaxDirection(RunArgs),
    /// Asymptotic variances of the plug-in and the Glasso
    Asv(RunArgs),
    /// Efficiencies relative to the classical plug-in
    EfficiencyTable(RunArgs),
    /// Re-run the task recorded in a run manifest
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Validate and print the resolved plan without computing
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    dry_run: bool,
}

fn dispatch(command: Command) -> Result<RunReport, CliError> {
    let (task, args) = match command {
        Command::Replay(a) => {
            return replay(&a.manifest, &RunOptions { out: a.out, seed: None, threads: a.threads, dry_run: a.dry_run });
        }
        Command::Solve(a) => (Task::Solve, a),
        Command::IfSurface(a) => (Task::IfSurface, a),
        Command::ScSurface(a) => (Task::ScSurface, a),
        Command::GesScan(a) => (Task::GesScan, a),
        Command::MaxDirection(a) => (Task::MaxDirection, a),
        Command::Asv(a) => (Task::Asv, a),
        Command::EfficiencyTable(a) => (Task::EfficiencyTable, a),
    };
    let config = ExperimentConfig::load(&args.config)?;
    run(task, &config, &RunOptions { out: args.out, seed: args.seed, threads: args.threads, dry_run: args.dry_run })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(RunReport::Plan(plan)) => {
            println!("{plan}");
            ExitCode::SUCCESS
        }
        Ok(RunReport::Written { csv, manifest, rows }) => {
            println!("wrote {} ({rows} rows) and {}", csv.display(), manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rglasso: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
