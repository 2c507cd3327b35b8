//! Command-line front end for `conelab-core`.
//!
//! A run reads a JSON input document, applies `--set` overrides, computes,
//! and writes three kinds of artifact into the output directory:
//! `manifest.json` (inputs, versions, seed, outputs), `result.json` (every
//! number with a `<name>_tol` sibling) and one CSV per table.
//!
//! Exit status: 0 success, 2 invalid input, 3 numerical non-convergence,
//! 4 an "unbounded below" verdict.
//!
//! An input carrying `"grid": {"param": "link.beta", "values": [...]}` (or
//! `start`/`stop`/`step`) is run once per grid value in parallel. Rows keep
//! the input order, each row has a `status` column, and failed rows never
//! abort the scan.

pub mod commands;
pub mod report;
pub mod spec;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::report::{write_json, Cell, Outcome, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Lambda,
    Mu,
    Nu,
    ClassifyCone,
    ProbeDivergence,
    VerifyInequalities,
    Flow,
    Smooth,
    ScanBeta,
    EnvelopeCheck,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Lambda => "lambda",
            Command::Mu => "mu",
            Command::Nu => "nu",
            Command::ClassifyCone => "classify-cone",
            Command::ProbeDivergence => "probe-divergence",
            Command::VerifyInequalities => "verify-inequalities",
            Command::Flow => "flow",
            Command::Smooth => "smooth",
            Command::ScanBeta => "scan-beta",
            Command::EnvelopeCheck => "envelope-check",
        }
    }

    /// Inputs that are only a link may be given as the bare link spec.
    fn takes_bare_link(&self) -> bool {
        matches!(
            self,
            Command::Lambda | Command::Mu | Command::Nu | Command::ClassifyCone | Command::EnvelopeCheck
        )
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    /// Seed of every random probe generator.
    pub seed: u64,
    /// Overrides the default tolerance of a command's primary quantities
    /// and pass/fail thresholds.
    pub tolerance: Option<f64>,
    /// Polar nodes of flow states / radial nodes of inequality probes.
    pub grid_nodes: Option<usize>,
    /// Worker threads; 0 means the machine's parallelism.
    pub jobs: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { seed: 42, tolerance: None, grid_nodes: None, jobs: 0 }
    }
}

impl Options {
    pub fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NonConvergence,
    UnboundedBelow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, code: "invalid_input".into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::NonConvergence => 3,
            ErrorKind::UnboundedBelow => 4,
        }
    }
}

impl From<conelab_core::Error> for CliError {
    fn from(e: conelab_core::Error) -> Self {
        let kind = if matches!(e, conelab_core::Error::DichotomyInfinite { .. }) {
            ErrorKind::UnboundedBelow
        } else if e.is_convergence_failure() {
            ErrorKind::NonConvergence
        } else {
            ErrorKind::Validation
        };
        Self { kind, code: e.code().into(), message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: Command,
    pub input_path: PathBuf,
    pub output_dir: PathBuf,
    /// `key=value` overrides applied to the input document in order.
    pub overrides: Vec<(String, String)>,
    pub options: Options,
}

fn status_of(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Success => "ok",
        Outcome::UnboundedBelow => "unbounded_below",
    }
}

fn exit_of(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Success => 0,
        Outcome::UnboundedBelow => 4,
    }
}

/// Run a command on an in-memory document (overrides already applied).
pub fn execute(command: Command, input: Value, opts: &Options) -> Result<Report, CliError> {
    let mut input = if command.takes_bare_link() { spec::wrap_bare_link(input) } else { input };
    if !input.is_object() {
        return Err(CliError::validation("input must be a JSON object"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| CliError::validation(format!("thread pool: {e}")))?;
    match spec::take_grid(&mut input)? {
        None => pool.install(|| commands::dispatch(command, &input, opts)),
        Some(grid) => pool.install(|| scan(command, &input, &grid, opts)),
    }
}

fn scan(command: Command, input: &Value, grid: &spec::GridSpec, opts: &Options) -> Result<Report, CliError> {
    let values = grid.values()?;
    let columns = commands::scan_columns(command);
    let rows: Vec<Result<Report, CliError>> = values
        .par_iter()
        .map(|&v| {
            let mut doc = input.clone();
            spec::set_path(&mut doc, &grid.param, Value::from(v))?;
            commands::dispatch(command, &doc, opts)
        })
        .collect();
    let mut header: Vec<&str> = vec![grid.param.as_str()];
    header.extend_from_slice(columns);
    header.push("status");
    let mut t = Table::new("scan", &header);
    let mut failures = 0;
    for (v, row) in values.iter().zip(&rows) {
        let mut cells = vec![Cell::Num(*v)];
        match row {
            Ok(r) => {
                cells.extend(columns.iter().map(|c| r.cell(c)));
                cells.push(status_of(r.outcome).into());
            }
            Err(e) => {
                failures += 1;
                warn!("row {}={v}: {e}", grid.param);
                cells.extend(columns.iter().map(|_| Cell::Empty));
                cells.push(e.code.as_str().into());
            }
        }
        t.push(cells);
    }
    let mut r = Report::new();
    r.text("scan_param", &grid.param).int("rows", values.len()).int("failed_rows", failures);
    r.table(t);
    Ok(r)
}

fn read_input(command: Command, path: &Path, overrides: &[(String, String)]) -> Result<Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    // Wrap first so overrides such as `link.beta` address the same document
    // whether or not the file holds a bare link.
    let mut doc = if command.takes_bare_link() { spec::wrap_bare_link(doc) } else { doc };
    spec::apply_overrides(&mut doc, overrides)?;
    Ok(doc)
}

/// Run and write all artifacts; returns the process exit status.
pub fn run(spec: &RunSpec) -> i32 {
    let input = read_input(spec.command, &spec.input_path, &spec.overrides);
    let outcome = input.clone().and_then(|doc| execute(spec.command, doc, &spec.options));
    let (exit, mut result, tables) = match outcome {
        Ok(rep) => {
            let mut fields = rep.fields;
            fields.insert("status".into(), Value::from(status_of(rep.outcome)));
            (exit_of(rep.outcome), fields, rep.tables)
        }
        Err(e) => {
            warn!("{} failed: {e}", spec.command.as_str());
            let mut fields = Map::new();
            fields.insert("status".into(), Value::from("error"));
            fields.insert("error".into(), Value::from(e.code.clone()));
            fields.insert("message".into(), Value::from(e.message.clone()));
            (e.exit_code(), fields, Vec::new())
        }
    };
    result.insert("command".into(), Value::from(spec.command.as_str()));

    if let Err(e) = fs::create_dir_all(&spec.output_dir) {
        eprintln!("cannot create {}: {e}", spec.output_dir.display());
        return 2;
    }
    let mut outputs = vec![Value::from("result.json")];
    for t in &tables {
        if let Err(e) = t.write(&spec.output_dir) {
            eprintln!("cannot write {}: {e}", t.file_name());
            return 2;
        }
        outputs.push(Value::from(t.file_name()));
    }
    let manifest = manifest(spec, input.ok(), outputs, exit);
    let written = write_json(&spec.output_dir.join("result.json"), &Value::Object(result))
        .and_then(|_| write_json(&spec.output_dir.join("manifest.json"), &manifest));
    if let Err(e) = written {
        eprintln!("cannot write results: {e}");
        return 2;
    }
    info!("{} finished with status {exit}", spec.command.as_str());
    exit
}

fn manifest(spec: &RunSpec, input: Option<Value>, outputs: Vec<Value>, exit: i32) -> Value {
    let mut m = Map::new();
    m.insert("tool".into(), Value::from("conelab"));
    m.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
    m.insert("core_version".into(), Value::from(conelab_core::VERSION));
    m.insert("command".into(), Value::from(spec.command.as_str()));
    m.insert("input_path".into(), Value::from(spec.input_path.display().to_string()));
    m.insert("input".into(), input.unwrap_or(Value::Null));
    let overrides: Map<String, Value> =
        spec.overrides.iter().map(|(k, v)| (k.clone(), Value::from(v.clone()))).collect();
    m.insert("overrides".into(), Value::Object(overrides));
    m.insert("seed".into(), Value::from(spec.options.seed));
    m.insert("tolerance".into(), spec.options.tolerance.map_or(Value::Null, Value::from));
    m.insert("grid_nodes".into(), spec.options.grid_nodes.map_or(Value::Null, Value::from));
    m.insert("jobs".into(), Value::from(spec.options.jobs));
    m.insert("outputs".into(), Value::Array(outputs));
    m.insert("exit_code".into(), Value::from(exit));
    Value::Object(m)
}
