use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use conelab::{Command, Options, RunSpec};

/// Entropy functionals on cones, links and smoothings.
#[derive(Parser, Debug)]
#[command(name = "conelab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON input document.
    #[arg(long)]
    input: PathBuf,

    /// Output directory for manifest, result and CSV files.
    #[arg(long, default_value = "conelab-out")]
    out: PathBuf,

    /// Seed for every random probe generator.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Worker threads for scans (default: machine parallelism).
    #[arg(long, default_value_t = 0)]
    jobs: usize,

    /// Tolerance for the command's primary quantities and pass/fail checks.
    #[arg(long)]
    tolerance: Option<f64>,

    /// Number of grid nodes for flow states and inequality probes.
    #[arg(long)]
    grid_nodes: Option<usize>,

    /// Override an input field, e.g. --set link.beta=1.5 (repeatable).
    #[arg(long = "set", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONELAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(t) = cli.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            eprintln!("--tolerance must be positive");
            return ExitCode::from(2);
        }
    }
    let spec = RunSpec {
        command: cli.command,
        input_path: cli.input,
        output_dir: cli.out,
        overrides: cli.overrides,
        options: Options { seed: cli.seed, tolerance: cli.tolerance, grid_nodes: cli.grid_nodes, jobs: cli.jobs },
    };
    ExitCode::from(conelab::run(&spec) as u8)
}
