//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags or flag values),
//! 2 for numerical failures and output errors.

use std::ffi::OsString;
use std::io::{self, Write};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, ComparisonRow, DEFAULT_TOL};
use crate::models::{AgeReport, Discipline, SystemConfig};
use crate::simulator::{self, ResumePolicy, SimConfig, SimEstimate, DEFAULT_WARMUP};
use crate::Error;

/// Default simulation seed.
pub const DEFAULT_SEED: u64 = 20190707;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "prio-aoi",
    version,
    about = "Average age of information for prioritized streams on a preemptive server"
)]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact per-stream and total ages.
    Eval(EvalArgs),
    /// Monte Carlo estimate of the ages.
    Simulate(SimulateArgs),
    /// Exact ages over a grid of arrival rates, as CSV.
    Sweep(SweepArgs),
    /// Arrival rate minimizing the total age.
    Optimum(OptimumArgs),
    /// Arrival rate where WQ and NQ total ages cross.
    Crossing(CrossingArgs),
    /// Optimum and crossing for N = 3, 5, 8.
    Table2(Table2Args),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Number of streams.
    #[arg(long = "N", short = 'N')]
    pub streams: usize,
    /// Service rate.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Per-stream arrival rate.
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value = "wq")]
    pub discipline: Discipline,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value = "wq")]
    pub discipline: Discipline,
    /// Simulated time per replication.
    #[arg(long, default_value_t = 1e6)]
    pub horizon: f64,
    /// Fraction of the horizon discarded before measuring.
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: f64,
    #[arg(long, default_value_t = 5)]
    pub replications: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Preempted packets draw a fresh service time instead of resuming.
    #[arg(long)]
    pub restart: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long = "lambda-min")]
    pub lambda_min: f64,
    #[arg(long = "lambda-max")]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Space the rates logarithmically.
    #[arg(long)]
    pub log: bool,
    /// Only this discipline (both when omitted).
    #[arg(long)]
    pub discipline: Option<Discipline>,
}

#[derive(Debug, Args)]
pub struct OptimumArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value = "wq")]
    pub discipline: Discipline,
    #[arg(long, default_value_t = analysis::OPTIMUM_BRACKET.0)]
    pub lo: f64,
    #[arg(long, default_value_t = analysis::OPTIMUM_BRACKET.1)]
    pub hi: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct CrossingArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = analysis::CROSSING_BRACKET.0)]
    pub lo: f64,
    #[arg(long, default_value_t = analysis::CROSSING_BRACKET.1)]
    pub hi: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct Table2Args {
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
}

enum Failure {
    Lib(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let (sink, code): (&mut dyn Write, i32) =
                if e.use_stderr() { (err, 1) } else { (out, 0) };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Lib(e)) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::InvalidConfig(_) => 1,
                _ => 2,
            }
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: write failed: {e}");
            2
        }
    }
}

fn system(args: &SystemArgs, lambda: f64) -> Result<SystemConfig, Error> {
    crate::models::check_streams(args.streams)?;
    SystemConfig::new(lambda, args.mu)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let format = cli.format;
    match &cli.command {
        Command::Eval(a) => {
            let cfg = system(&a.system, a.lambda)?;
            let report = analysis::evaluate(&cfg, a.system.streams, a.discipline)?;
            match format {
                Format::Json => writeln!(out, "{}", to_json(&report))?,
                Format::Csv => emit_sweep_csv(std::slice::from_ref(&report), out)?,
                Format::Table => write_report_table(&report, out)?,
            }
        }
        Command::Simulate(a) => {
            let cfg = system(&a.system, a.lambda)?;
            let mut sim = SimConfig::new(cfg, a.system.streams, a.discipline)
                .with_horizon(a.horizon)
                .with_seed(a.seed)
                .with_replications(a.replications)
                .with_resume(if a.restart {
                    ResumePolicy::Restart
                } else {
                    ResumePolicy::Resume
                });
            sim.warmup_fraction = a.warmup;
            let est = simulator::simulate(&sim)?;
            match format {
                Format::Json => writeln!(out, "{}", to_json(&est))?,
                Format::Csv => est.write_csv(&sim, out)?,
                Format::Table => write_estimate_table(&sim, &est, out)?,
            }
        }
        Command::Sweep(a) => {
            system(&a.system, a.lambda_min)?;
            let grid = analysis::rate_grid(a.lambda_min, a.lambda_max, a.points, a.log)?;
            let disciplines = match a.discipline {
                Some(d) => vec![d],
                None => Discipline::ALL.to_vec(),
            };
            let mut reports = Vec::new();
            for d in disciplines {
                reports.extend(analysis::total_age_curve(
                    a.system.streams,
                    a.system.mu,
                    &grid,
                    d,
                )?);
            }
            match format {
                Format::Json => writeln!(out, "{}", to_json(&reports))?,
                Format::Csv | Format::Table => emit_sweep_csv(&reports, out)?,
            }
        }
        Command::Optimum(a) => {
            system(&a.system, a.lo)?;
            let r = analysis::find_optimum(
                a.system.streams,
                a.system.mu,
                a.discipline,
                (a.lo, a.hi),
                a.tol,
            )?;
            match format {
                Format::Json => writeln!(out, "{}", to_json(&r))?,
                Format::Csv => {
                    writeln!(out, "N,mu,discipline,lambda_opt,age_opt")?;
                    writeln!(
                        out,
                        "{},{},{},{},{}",
                        r.streams, r.mu, r.discipline, r.lambda_opt, r.age_opt
                    )?;
                }
                Format::Table => writeln!(
                    out,
                    "N={} mu={} discipline={}\nlambda_opt  {:.6}\nage_opt     {:.6}",
                    r.streams, r.mu, r.discipline, r.lambda_opt, r.age_opt
                )?,
            }
        }
        Command::Crossing(a) => {
            system(&a.system, a.lo)?;
            let r = analysis::find_crossing(a.system.streams, a.system.mu, (a.lo, a.hi), a.tol)?;
            match format {
                Format::Json => writeln!(out, "{}", to_json(&r))?,
                Format::Csv => {
                    writeln!(out, "lambda_pass,lo,hi")?;
                    writeln!(out, "{},{},{}", r.lambda_pass, r.bracket[0], r.bracket[1])?;
                }
                Format::Table => writeln!(
                    out,
                    "N={} mu={}\nlambda_pass  {:.6}  (bracket [{}, {}], +/- {:.1e})",
                    a.system.streams,
                    a.system.mu,
                    r.lambda_pass,
                    r.bracket[0],
                    r.bracket[1],
                    r.achieved_tolerance
                )?,
            }
        }
        Command::Table2(a) => {
            SystemConfig::new(1.0, a.mu)?;
            let rows = analysis::comparison_table(&analysis::TABLE_STREAMS, a.mu, a.tol)?;
            match format {
                Format::Json => writeln!(out, "{}", to_json(&rows))?,
                Format::Csv => {
                    writeln!(
                        out,
                        "N,age_wq_opt,lambda_wq_opt,age_nq_opt,lambda_nq_opt,lambda_pass"
                    )?;
                    for r in &rows {
                        writeln!(
                            out,
                            "{},{},{},{},{},{}",
                            r.streams,
                            r.wq.age_opt,
                            r.wq.lambda_opt,
                            r.nq.age_opt,
                            r.nq.lambda_opt,
                            r.crossing.lambda_pass
                        )?;
                    }
                }
                Format::Table => write_comparison_table(&rows, out)?,
            }
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("result serializes")
}

/// Formats `x` with at most `digits` significant digits.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("formatted float parses");
    rounded.to_string()
}

/// Writes `lambda,discipline,stream,age` rows: one per stream (numbered
/// from 1, top priority first) plus a `total` row for every report.
pub fn emit_sweep_csv(points: &[AgeReport], out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "lambda,discipline,stream,age")?;
    for p in points {
        let lambda = significant(p.lambda, 6);
        for (k, age) in p.per_stream.iter().enumerate() {
            writeln!(out, "{lambda},{},{},{age}", p.discipline, k + 1)?;
        }
        writeln!(out, "{lambda},{},total,{}", p.discipline, p.total)?;
    }
    Ok(())
}

fn write_report_table(r: &AgeReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "N={} lambda={} mu={} discipline={}",
        r.streams, r.lambda, r.mu, r.discipline
    )?;
    writeln!(out, "{:<8}{:>14}", "stream", "age")?;
    for (k, age) in r.per_stream.iter().enumerate() {
        writeln!(out, "{:<8}{:>14.6}", k + 1, age)?;
    }
    writeln!(out, "{:<8}{:>14.6}", "total", r.total)
}

fn write_estimate_table(cfg: &SimConfig, est: &SimEstimate, out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "N={} lambda={} mu={} discipline={} horizon={} replications={} seed={}",
        cfg.streams,
        cfg.system.lambda,
        cfg.system.mu,
        cfg.discipline,
        cfg.horizon,
        cfg.replications,
        cfg.seed
    )?;
    writeln!(out, "{:<8}{:>14}{:>14}", "stream", "age", "stderr")?;
    for (k, (age, se)) in est.per_stream_age.iter().zip(&est.stderr).enumerate() {
        writeln!(out, "{:<8}{:>14.6}{:>14.6}", k + 1, age, se)?;
    }
    writeln!(out, "{:<8}{:>14.6}", "total", est.total_age)?;
    if est.non_convergence {
        writeln!(
            out,
            "warning: relative standard error above {}",
            simulator::CONVERGENCE_THRESHOLD
        )?;
    }
    Ok(())
}

fn write_comparison_table(rows: &[ComparisonRow], out: &mut dyn Write) -> io::Result<()> {
    writeln!(
        out,
        "{:>3} {:>12} {:>10} {:>12} {:>10} {:>12}",
        "N", "WQ age_opt", "WQ l_opt", "NQ age_opt", "NQ l_opt", "lambda_pass"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:>3} {:>12.4} {:>10.4} {:>12.4} {:>10.4} {:>12.4}",
            r.streams,
            r.wq.age_opt,
            r.wq.lambda_opt,
            r.nq.age_opt,
            r.nq.lambda_opt,
            r.crossing.lambda_pass
        )?;
    }
    Ok(())
}
