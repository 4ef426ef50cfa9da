use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lidbench::pipeline::{self, PipelineError, RunDir, StageSummary};

/// Generate position-controlled graph prompts, evaluate a chat model on
/// them, and fit position and distance degradation models.
#[derive(Debug, Parser)]
#[command(name = "lidbench", version)]
struct Cli {
    /// Root directory holding every artifact of the run.
    #[arg(long, global = true, default_value = ".")]
    run_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a configuration and write the prompt corpora.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Query the configured backend for every corpus instance.
    Run,
    /// Parse responses and aggregate accuracy cells.
    Score,
    /// Fit the position-only and distance models.
    Fit,
    /// Write tables, figures and the run summary.
    Report,
    /// Check every artifact against the manifest hashes.
    Verify,
    /// Run every stage in order.
    All {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_summary(s: &StageSummary) {
    println!("{}: {} files", s.stage.as_str(), s.outputs.len());
    for note in &s.notes {
        println!("  {note}");
    }
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let dir = RunDir::new(&cli.run_dir);
    match cli.command {
        Command::Generate { config } => print_summary(&pipeline::generate(&dir, &config)?),
        Command::Run => print_summary(&pipeline::run(&dir)?),
        Command::Score => print_summary(&pipeline::score(&dir)?),
        Command::Fit => print_summary(&pipeline::fit(&dir)?),
        Command::Report => print_summary(&pipeline::report(&dir)?),
        Command::Verify => println!("verify: {} files match the manifest", pipeline::verify(&dir)?),
        Command::All { config } => pipeline::run_all(&dir, &config)?.iter().for_each(print_summary),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
