use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use taoi_core::oracle::{enumerate_optimal, Objective, ScheduleProblem};
use taoi_core::rate_control::Protocol;
use taoi_core::run_simulation;

use crate::config::parse_config;
use crate::report::{emit_reports, write_pair_te, PAIR_TE_CSV};
use crate::sweep::{parse_list, parse_range_list, run_sweep, SweepSpec};
use crate::tables::{reproduce_tables, table_csv};

#[derive(Debug, Parser)]
#[command(name = "taoi-sim", version, about = "V2V broadcast rate-control simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its reports.
    Run(RunArgs),
    /// Run every protocol x density x seed combination and compare them.
    Sweep(SweepArgs),
    /// Exhaustive schedule search on the two-vehicle toy problem.
    Oracle(OracleArgs),
    /// Rebuild the two toy tables and diff them against the expected values.
    ReproduceTables(TablesArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config; absent keys take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write pair_te.csv with the mean tracking error per ordered pair.
    #[arg(long)]
    pub pair_te: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "fixed10hz,aoi,taoi")]
    pub protocols: String,
    /// Vehicle counts, comma separated.
    #[arg(long, default_value = "100,150,200,250")]
    pub densities: String,
    /// Seeds, comma separated; `lo..hi` ranges are allowed.
    #[arg(long, default_value = "0..10")]
    pub seeds: String,
    /// Concurrent runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "sweep")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 6)]
    pub slots: usize,
    /// system_aoi, system_taoi or sum_te.
    #[arg(long, default_value = "system_aoi")]
    pub objective: Objective,
    /// Transmissions per slot.
    #[arg(long, default_value_t = 1)]
    pub capacity: usize,
    /// Self tracking error threshold, as an integer or `n/d`.
    #[arg(long, default_value = "1/2")]
    pub tau_th: Ratio<i64>,
    #[arg(long, default_value_t = 0)]
    pub min_tx: usize,
    #[arg(long)]
    pub max_tx: Option<usize>,
    /// Also write the table to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    /// Directory for table_1.csv and table_2.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one subcommand, writing human-readable output to `out`. `Ok(false)`
/// means the command ran but a check failed.
pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Run(a) => {
            let mut cfg = parse_config(&a.config)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let report = run_simulation(&cfg)?;
            writeln!(
                out,
                "{} n={} seed={}: collision risk {}, mean interval {:.1} ms, system AoI {:.4} s, system TAoI {:.4} s",
                report.protocol.name(),
                report.n_vehicles,
                report.seed,
                report.collision_risk_count,
                report.mean_interval_ms,
                report.system_aoi,
                report.system_taoi
            )?;
            let mut files = emit_reports(std::slice::from_ref(&report), &a.out)?;
            if a.pair_te {
                let path = a.out.join(PAIR_TE_CSV);
                write_pair_te(&report, &path)?;
                files.push(path);
            }
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(true)
        }
        Command::Sweep(a) => {
            let spec = SweepSpec {
                protocols: parse_list::<Protocol>(&a.protocols)?,
                vehicle_counts: parse_list(&a.densities)?,
                seeds: parse_range_list(&a.seeds)?,
                base: parse_config(&a.config)?,
            };
            let jobs = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = run_sweep(&spec, jobs, &a.out)?;
            writeln!(out, "{} runs", outcome.reports.len())?;
            for f in outcome.files {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(true)
        }
        Command::Oracle(a) => {
            let mut problem = ScheduleProblem::toy(a.slots, a.objective);
            problem.capacity = a.capacity;
            problem.tau_th = a.tau_th;
            problem.min_tx = a.min_tx;
            problem.max_tx = a.max_tx;
            let sol = enumerate_optimal(&problem)?;
            let names = ["u", "v", "w"];
            let mut layout = vec![(
                "tx".to_string(),
                sol.assignment
                    .iter()
                    .map(|s| if s.is_empty() { "-".to_string() } else { s.iter().map(|&v| names[v]).collect::<Vec<_>>().join("+") })
                    .collect::<Vec<_>>(),
            )];
            layout.extend(sol.tables.layout());
            let csv = table_csv(&layout);
            out.write_all(csv.as_bytes())?;
            let value = match sol.exact {
                Some(q) if q.is_integer() => q.to_integer().to_string(),
                Some(q) => format!("{}/{} ({:.6})", q.numer(), q.denom(), sol.value),
                None => format!("{:.6}", sol.value),
            };
            eprintln!("optimum {value} over {} schedules evaluated", sol.evaluated);
            if let Some(path) = a.out {
                fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(true)
        }
        Command::ReproduceTables(a) => {
            let results = reproduce_tables()?;
            if let Some(dir) = &a.out {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            let mut all = true;
            for r in &results {
                writeln!(out, "{}", r.name)?;
                for c in &r.checks {
                    writeln!(out, "  {} {}: {}", if c.ok { "PASS" } else { "FAIL" }, c.what, c.detail)?;
                }
                match &a.out {
                    Some(dir) => {
                        let path = dir.join(r.file);
                        fs::write(&path, r.csv()).with_context(|| format!("cannot write {}", path.display()))?;
                        writeln!(out, "  wrote {}", path.display())?;
                    }
                    None => out.write_all(r.csv().as_bytes())?,
                }
                all &= r.passed();
            }
            writeln!(out, "{}", if all { "tables reproduced" } else { "tables differ" })?;
            Ok(all)
        }
    }
}
