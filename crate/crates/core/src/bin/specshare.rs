//! Command-line front end: single runs, parameter sweeps and paired
//! sharing comparisons, with JSON/CSV export.
//!
//! Exit codes: 0 success, 1 invalid config or sweep spec, 2 runtime failure
//! (internal invariant violation or I/O error while writing results).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use specshare::config::ConfigError;
use specshare::engine::{run_with_options, RunError, RunOptions};
use specshare::report::{event_trace_to_csv, message_trace_to_csv};
use specshare::sweep::{compare_sharing, run_sweep, SweepSpec};
use specshare::ScenarioConfig;

#[derive(Parser)]
#[command(
    name = "specshare",
    version,
    about = "Simulates cellular providers sharing licensed spectrum via cognitive-radio sensing nodes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metric report.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write the call/channel event trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the protocol message trace (CSV) here.
        #[arg(long)]
        message_trace: Option<PathBuf>,
    },
    /// Run a parameter sweep; writes per-replication CSV rows plus a
    /// `<out>.summary.csv` with replication means.
    Sweep {
        /// Sweep spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Destination for the per-replication rows.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run matched-seed pairs with sharing on/off and report paired deltas
    /// plus a sign test.
    Compare {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Number of replication pairs.
        #[arg(long)]
        reps: u32,
        /// JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Invalid(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => CliError::Invalid(c.to_string()),
            RunError::Invariant { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
            trace,
            message_trace,
        } => {
            let mut cfg = ScenarioConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let opts = RunOptions {
                event_trace: trace.is_some(),
                message_trace: message_trace.is_some(),
            };
            let output = run_with_options(&cfg, opts)?;
            let rendered = match format {
                Format::Json => {
                    let mut s = output.result.to_json_string();
                    s.push('\n');
                    s
                }
                Format::Csv => output.result.to_csv_string(),
            };
            write_output(out.as_deref(), &rendered)?;
            if let Some(p) = trace {
                write_file(
                    &p,
                    &event_trace_to_csv(output.event_trace.as_deref().unwrap_or(&[])),
                )?;
            }
            if let Some(p) = message_trace {
                write_file(
                    &p,
                    &message_trace_to_csv(output.message_trace.as_deref().unwrap_or(&[])),
                )?;
            }
            Ok(())
        }
        Command::Sweep { spec, out } => {
            let spec = SweepSpec::from_path(&spec)?;
            let result = run_sweep(&spec)?;
            write_file(&out, &result.rows_to_csv())?;
            write_file(&out.with_extension("summary.csv"), &result.summary_to_csv())?;
            Ok(())
        }
        Command::Compare { config, reps, out } => {
            let cfg = ScenarioConfig::from_path(&config)?;
            let result = compare_sharing(&cfg, reps)?;
            let mut s = result.to_json_string();
            s.push('\n');
            write_output(out.as_deref(), &s)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
