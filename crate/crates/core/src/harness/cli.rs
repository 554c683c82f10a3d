//! `tgd` command line: `run`, `oracle`, `plotdata`, `validate`.
//!
//! Errors are reported as one JSON line on stderr. Usage and config errors exit
//! with status 2, runtime failures with status 1.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Result, TgdError};
use crate::oracle::{write_points_bin, write_points_csv};

use super::config::RunConfig;
use super::output::{aggregate, emit_all, read_results_csv, write_aggregate_csv};
use super::run::Experiment;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "TGD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tgd", version, about = "Tempered guided diffusion experiments on a 2D mixture prior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full sweep and write result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: $TGD_THREADS, else all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Print one line per finished cell on stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Dump exact posterior samples for one condition.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        condition: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = PointFormat::Csv)]
        format: PointFormat,
        /// Output file; CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-(method, N) mean and standard error from a results directory.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Check a config without sampling.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PointFormat {
    Csv,
    Bin,
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn exit_code(e: &TgdError) -> i32 {
    match e {
        TgdError::Config(_) => 2,
        _ => 1,
    }
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                TgdError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(TgdError::Config("thread count must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.unwrap_or(0))
        .build()
        .map_err(|e| TgdError::numerical(format!("cannot start worker pool: {e}")))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, out, seed, threads, progress } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let pool = thread_pool(threads)?;
            let exp = Experiment::new(cfg)?;
            let sweep = pool.install(|| {
                exp.sweep_with(|r| {
                    if progress {
                        eprintln!(
                            "condition {} {} N={} swd={:.5} {}",
                            r.condition_id, r.method, r.n_particles, r.swd, r.status
                        );
                    }
                })
            })?;
            emit_all(&dir, &exp, &sweep)?;
            let failed = sweep.records.iter().filter(|r| r.status != "ok").count();
            println!(
                "{}",
                serde_json::json!({
                    "status": "ok",
                    "out": dir,
                    "config_hash": exp.config_hash(),
                    "cells": sweep.records.len(),
                    "failed_cells": failed,
                })
            );
            Ok(())
        }
        Command::Oracle { config, condition, samples, format, out } => {
            let exp = Experiment::new(RunConfig::load(&config)?)?;
            if condition >= exp.conditions().len() {
                return Err(TgdError::Config(format!(
                    "condition {condition} out of range (config has {})",
                    exp.conditions().len()
                )));
            }
            let pts = exp.oracle_samples(condition, samples)?;
            match (format, out) {
                (PointFormat::Csv, Some(p)) => write_points_csv(&p, &pts),
                (PointFormat::Bin, Some(p)) => write_points_bin(&p, &pts),
                (PointFormat::Csv, None) => {
                    let stdout = std::io::stdout();
                    let mut w = csv::Writer::from_writer(stdout.lock());
                    w.write_record((0..exp.prior().dim()).map(|j| format!("x{j}")))?;
                    for p in &pts {
                        w.write_record(p.iter().map(|v| format!("{v:e}")))?;
                    }
                    w.flush()?;
                    Ok(())
                }
                (PointFormat::Bin, None) => Err(TgdError::Config("binary output needs --out".into())),
            }
        }
        Command::Plotdata { input } => {
            let records = read_results_csv(&input.join("results.csv"))?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_aggregate_csv(&mut lock, &aggregate(&records))?;
            lock.flush()?;
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let exp = Experiment::new(cfg)?;
            println!(
                "{}",
                serde_json::json!({
                    "status": "ok",
                    "config_hash": exp.config_hash(),
                    "conditions": exp.conditions().len(),
                    "methods": exp.methods().iter().map(|m| m.spec.name.as_str()).collect::<Vec<_>>(),
                    "cells": exp.config().cell_count(),
                })
            );
            Ok(())
        }
    }
}
