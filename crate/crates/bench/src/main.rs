use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use relaxed_bench::output::out_dir_from_env;
use relaxed_bench::{parse_config, parse_flags, run, Experiment};
use relaxed_core::workload::hardware_threads;

/// Runs relaxed-structure experiments and writes CSV files into the
/// directory named by `RELAXED_OUT_DIR` (default `results`).
#[derive(Parser)]
#[command(name = "relaxed-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sequential (1+beta)-choice process.
    Seq(Overrides),
    /// Asynchronous two-choice simulator under an adversary.
    Sim(Overrides),
    /// Live MultiCounter: throughput sweep, quality run or recorded history.
    Counter(Overrides),
    /// Live MultiQueue: rank run, integrity stress or recorded history.
    Queue(Overrides),
    /// TL2 with exact and MultiCounter clocks.
    Stm(Overrides),
    /// Runs whatever experiment the config file names.
    Run(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML file of key = value pairs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-key overrides, `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    flags: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let (experiment, args) = match cli.command {
        Command::Seq(a) => (Some(Experiment::Seq), a),
        Command::Sim(a) => (Some(Experiment::Sim), a),
        Command::Counter(a) => (Some(Experiment::Counter), a),
        Command::Queue(a) => (Some(Experiment::Queue), a),
        Command::Stm(a) => (Some(Experiment::Stm), a),
        Command::Run(a) => (None, a),
    };
    let text = args
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let flags = parse_flags(&args.flags)?;
    let config = parse_config(experiment, text.as_deref(), &flags, hardware_threads())?;
    let report = run(&config, &out_dir_from_env())?;
    for f in &report.files {
        println!("{}", f.display());
    }
    if report.passed() {
        return Ok(ExitCode::SUCCESS);
    }
    for f in &report.failures {
        eprintln!("oracle failed: {f}");
    }
    if let Some(d) = &report.diagnostics {
        eprintln!("diagnostics written to {}", d.display());
    }
    Ok(ExitCode::from(1))
}
