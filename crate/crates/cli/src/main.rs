//! `cavent`: batch front-end for the two-cavity entanglement simulator.
//!
//! ```text
//! cavent simulate --config run.toml [--out result.json] [--format json|csv]
//! cavent sweep    --config sweep.toml [--out table.csv] [--workers 4]
//! cavent validate [--config run.toml] [--out report.json]
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation error,
//! 4 validation failure.

mod config;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Format, RunConfig};
use crate::report::{Record, SimulateJson, SweepJson, SweepPoint, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(#[from] cavent::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
    #[error("output error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "cavent", version, about = "Entangled cavity fields from a driven atom crossing two cavities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Sweep worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Reserved; every pipeline is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one protocol.
    Simulate,
    /// Run the Cartesian product of the configured sweep axes.
    Sweep,
    /// Run the invariant suite.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate => simulate(&cli),
        Command::Sweep => sweep(&cli),
        Command::Validate => validate(&cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavent: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn require_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    config::load(path)
}

fn pick_format(cli: &Cli, cfg: Option<&RunConfig>, fallback: Format) -> Format {
    match cli.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => cfg.and_then(RunConfig::format).unwrap_or(fallback),
    }
}

fn sink(cli: &Cli, cfg: Option<&RunConfig>) -> Result<Box<dyn Write>, CliError> {
    let path = cli
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.path.as_ref().map(PathBuf::from)));
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(create(&p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let cfg = require_config(cli)?;
    let resolved = cfg.resolve()?;
    let start = Instant::now();
    let record = report::execute(&resolved)?;
    let wall = start.elapsed().as_secs_f64();
    let mut out = sink(cli, Some(&cfg))?;
    match pick_format(cli, Some(&cfg), Format::Json) {
        Format::Json => {
            let doc = SimulateJson {
                schema_version: SCHEMA_VERSION,
                command: "simulate",
                unit_conversions: &resolved.conversions,
                seed: cli.seed,
                wall_clock_seconds: wall,
                record: &record,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => report::write_simulate_csv(&mut out, &record)?,
    }
    out.flush()?;
    Ok(())
}

/// All sweep points in axis order: the first axis varies slowest.
fn grid(cfg: &RunConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let mut points = vec![Vec::new()];
    for axis in &cfg.sweep.axis {
        let values = axis.points()?;
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn sweep(cli: &Cli) -> Result<(), CliError> {
    let cfg = require_config(cli)?;
    let names: Vec<String> = cfg.sweep.axis.iter().map(|a| a.name.clone()).collect();
    let points = grid(&cfg)?;
    let mut resolved = Vec::with_capacity(points.len());
    for values in &points {
        let mut c = cfg.clone();
        for (name, &v) in names.iter().zip(values) {
            c = c.with_value(name, v)?;
        }
        resolved.push(c.resolve()?);
    }
    let workers = cli
        .workers
        .or(cfg.sweep.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let records: Vec<Record> = pool.install(|| {
        resolved
            .par_iter()
            .map(report::execute)
            .collect::<Result<Vec<_>, _>>()
    })?;
    let table: Vec<(Vec<f64>, Record)> = points.into_iter().zip(records).collect();

    let mut out = sink(cli, Some(&cfg))?;
    match pick_format(cli, Some(&cfg), Format::Csv) {
        Format::Csv => report::write_sweep_csv(&mut out, &names, &table)?,
        Format::Json => {
            let conversions = resolved.first().map(|r| r.conversions.clone()).unwrap_or_default();
            let doc = SweepJson {
                schema_version: SCHEMA_VERSION,
                command: "sweep",
                unit_conversions: &conversions,
                seed: cli.seed,
                points: table
                    .iter()
                    .map(|(values, record)| SweepPoint {
                        axes: names.iter().map(String::as_str).zip(values.iter().copied()).collect(),
                        record,
                    })
                    .collect(),
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn validate(cli: &Cli) -> Result<(), CliError> {
    let opts = config::load_validate(cli.config.as_deref())?;
    let report = cavent::validation::run_invariant_suite(&opts)?;
    for c in &report.checks {
        println!(
            "{} {:<52} residual = {:.3e} (threshold {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.threshold
        );
    }
    if let Some(path) = &cli.out {
        let mut w = BufWriter::new(create(path)?);
        match pick_format(cli, None, Format::Json) {
            Format::Json => {
                serde_json::to_writer_pretty(
                    &mut w,
                    &serde_json::json!({
                        "schema_version": SCHEMA_VERSION,
                        "command": "validate",
                        "options": opts,
                        "checks": report.checks,
                    }),
                )?;
                writeln!(w)?;
            }
            Format::Csv => {
                let mut c = csv::Writer::from_writer(&mut w);
                c.write_record(["check", "residual", "threshold", "passed"])?;
                for k in &report.checks {
                    c.write_record([
                        k.name.clone(),
                        format!("{:.6e}", k.residual),
                        format!("{:.1e}", k.threshold),
                        k.passed.to_string(),
                    ])?;
                }
                c.flush()?;
            }
        }
        w.flush()?;
    }
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join("; ")))
    }
}
