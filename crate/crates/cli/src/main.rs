//! `dmsclass`: generate, inspect, preprocess and classify dispersion-plot
//! datasets. Every command writes into its own run directory together with
//! a `run.json` manifest.

mod error;
mod eval;
mod generate;
mod inspect;
mod preprocess;
mod report;
mod roi;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dmsclass", version, about = "Dispersion-plot classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic measurement campaign.
    Generate(generate::GenerateArgs),
    /// Render heatmaps, drift series, stack statistics and entropy profiles.
    Inspect(inspect::InspectArgs),
    /// Clip every plot to the region of interest and normalise its sweeps.
    Preprocess(preprocess::PreprocessArgs),
    /// Cross-validate classifiers.
    Eval(eval::EvalArgs),
    /// Merge eval runs into one results table.
    Report(report::ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Parent of the per-run directory `<command>-<unix millis>`.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Exact run directory, overriding `--out`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Inspect(a) => inspect::run(a),
        Command::Preprocess(a) => preprocess::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
