//! Command line front end for the experiment harness.
//!
//! Exit codes: 0 on success, 1 for configuration errors (including bad
//! arguments), 2 when a run fails, including when only some seeds fail.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eigenopt::config::{parse_override, RunConfig};
use eigenopt::env::ENV_NAMES;
use eigenopt::harness::{self, export_heatmap, export_visitation, oracle_values, parse_grid};
use eigenopt::options::run_controller;
use eigenopt::{Error, Result};

#[derive(Parser)]
#[command(name = "eigenopt", version = harness_version(), about = "Laplacian option discovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn harness_version() -> &'static str {
    Box::leak(harness::version().into_boxed_str())
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write metric CSVs.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set steps=5000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a config once per point of a parameter grid.
    Sweep {
        config: PathBuf,
        /// Lines of `key = v1 | v2 | ...`.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write an eigenfunction or visitation grid as CSV.
    ExportHeatmap {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        source: Source,
        /// Eigenfunction index, 0-based (0 is the constant function).
        #[arg(long, default_value_t = 1)]
        index: usize,
        /// Seed for learned and visitation exports.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// List the built-in environments.
    ListEnvs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Oracle,
    Learned,
    Visitation,
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter().map(|s| parse_override(s)).collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("eigenopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::ListEnvs => {
            for name in ENV_NAMES {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Run { config, set } => {
            let cfg = RunConfig::load(&config, &overrides(&set)?)?;
            let report = harness::run_experiment(&cfg)?;
            Ok(summarize(&report))
        }
        Command::Sweep { config, grid, set } => {
            let text = std::fs::read_to_string(&grid)
                .map_err(|e| Error::config(format!("cannot read grid {}: {e}", grid.display())))?;
            let reports = harness::sweep(&config, &overrides(&set)?, &parse_grid(&text)?)?;
            Ok(reports.iter().map(summarize).max().unwrap_or(0))
        }
        Command::ExportHeatmap { config, source, index, seed, out, set } => {
            let cfg = RunConfig::load(&config, &overrides(&set)?)?;
            let mut env = cfg.make_env()?;
            match source {
                Source::Oracle => {
                    let (ids, values) = oracle_values(&env, index)?;
                    export_heatmap(&env, &ids, &values, &out)?;
                }
                Source::Learned => {
                    let m = run_controller(&cfg, seed)?;
                    let snap = m
                        .eigen_snapshot
                        .ok_or_else(|| Error::usage(format!("{} learns no representation", cfg.algorithm)))?;
                    let ids: Vec<usize> = env.enumerate_states().iter().map(|s| s.tabular_id).collect();
                    let col = snap
                        .iter()
                        .map(|row| row.get(index).copied())
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(|| Error::usage(format!("index {index} is beyond repr.d")))?;
                    export_heatmap(&env, &ids, &col, &out)?;
                }
                Source::Visitation => {
                    if env.as_grid().is_none() {
                        return Err(Error::Unsupported(format!("{} has no grid layout to export", env.name())));
                    }
                    let m = run_controller(&cfg, seed)?;
                    export_visitation(&m.visitation, &env, &out)?;
                }
            }
            println!("wrote {}", out.display());
            Ok(0)
        }
    }
}

fn summarize(report: &harness::ExperimentReport) -> u8 {
    println!("{}: {} seed(s) ok, {} failed", report.output_dir.display(), report.runs.len(), report.failures.len());
    for (seed, msg) in &report.failures {
        eprintln!("seed {seed}: {msg}");
    }
    if report.all_ok() {
        0
    } else {
        2
    }
}
