#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use fractalconfig::io::canonical_json;
use serde_json::{json, Value};

use commands::{error_status, run, Outcome, RunContext, Status};
use config::{RunConfig, COMMANDS};

/// Run one fractalconfig command and write a canonical JSON report.
#[derive(Parser, Debug)]
#[command(name = "fractalconfig", version, about)]
struct Cli {
    /// Command to run, e.g. `measure.build`.
    command: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report and artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Cap on evaluated terms for commands that accept one.
    #[arg(long)]
    budget: Option<u64>,
    /// Parameter override, value parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long = "input", value_name = "NAME=PATH")]
    input: Vec<String>,
    /// List the available commands and exit.
    #[arg(long)]
    list: bool,
}

fn assemble(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match (&cli.command, &config.command) {
        (Some(a), Some(b)) if a != b => bail!("command '{a}' conflicts with config command '{b}'"),
        (Some(a), _) => config.command = Some(a.clone()),
        _ => {}
    }
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.budget.is_some() {
        config.budget = cli.budget;
    }
    if cli.out.is_some() {
        config.out = cli.out.clone();
    }
    for s in &cli.set {
        config.set_param(s)?;
    }
    for s in &cli.input {
        config.set_input(s)?;
    }
    config.validate()?;
    Ok(config)
}

fn report(config: &RunConfig, status: Status, results: Value) -> String {
    canonical_json(&json!({
        "command": config.command,
        "config": config.replay_block(),
        "status": status.label(),
        "results": results,
    }))
}

fn write_outputs(out: &PathBuf, text: &str, outcome: Option<&Outcome>) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("report.json"), format!("{text}\n"))?;
    if let Some(o) = outcome {
        for (name, bytes) in &o.artifacts {
            std::fs::write(out.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<Status> {
    let config = assemble(cli)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let ctx = RunContext {
        config: &config,
        cache: std::env::var_os("FRACTALCONFIG_CACHE").map(PathBuf::from),
    };
    let result = fractalconfig::par::with_threads(cli.threads.unwrap_or(0), || run(&ctx));
    match result {
        Ok(outcome) => {
            let text = report(&config, outcome.status, outcome.results.clone());
            write_outputs(&out, &text, Some(&outcome))?;
            println!("{text}");
            Ok(outcome.status)
        }
        Err(err) => match error_status(&err) {
            Some(status) => {
                let text = report(&config, status, json!({ "error": format!("{err:#}") }));
                write_outputs(&out, &text, None)?;
                println!("{text}");
                eprintln!("fractalconfig: {err:#}");
                Ok(status)
            }
            None => Err(err),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list {
        for c in COMMANDS {
            println!("{c}");
        }
        return ExitCode::SUCCESS;
    }
    match execute(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::HypothesisFailed) => ExitCode::from(2),
        Err(err) => {
            eprintln!("fractalconfig: {err:#}");
            ExitCode::from(1)
        }
    }
}
