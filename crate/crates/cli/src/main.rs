//! `fpm-balance`: run, compare and inspect heterogeneous load balancing.
//!
//! Exit codes: 0 when balancing converged (or the command succeeded), 2 when
//! it stopped at the round limit, 1 on any error. Diagnostics go to stderr;
//! data goes to stdout only with `--out -`. Set `FPM_BALANCE_LOG` (for
//! example to `info` or `debug`) for progress logging.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fpm_balance::compare::{compare_1d, compare_2d, Comparison, GridComparison};
use fpm_balance::export::{self, sig9};
use fpm_balance::kernels::{RealExecutor, RealGridExecutor};
use fpm_balance::scenario::Scenario;
use fpm_balance::{brute_force_optimum, dfpa, dfpa_2d, Error, Status};
use log::info;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "fpm-balance", version, about = "Functional-performance-model load balancing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Balance a workload and write the trace.
    Run(RunArgs),
    /// Compare constant-model, full-model and dynamic partitioning.
    Compare(CompareArgs),
    /// Turn a 1D trace into per-processor plot series.
    Plotdata(PlotArgs),
    /// Exhaustive optimum of a small noise-free 1D scenario.
    Oracle(OracleArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Sim,
    Real,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    #[value(name = "1d")]
    One,
    #[value(name = "2d")]
    Two,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Relative imbalance tolerance; overrides the scenario.
    #[arg(long)]
    eps: Option<f64>,
    /// Noise seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Round limit (inner rounds for grids); overrides the scenario.
    #[arg(long)]
    max_rounds: Option<u32>,
    /// Output file, or `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; defaults to the extension of `--out`, else csv.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "sim")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "1d")]
    dim: Dim,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Debug)]
struct CompareArgs {
    #[arg(long, value_enum, default_value = "1d")]
    dim: Dim,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Debug)]
struct PlotArgs {
    /// Trace written by `run --dim 1d`, CSV or JSON.
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult<T> = Result<T, Error>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FPM_BALANCE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args).map(|()| Status::Converged),
        Command::Plotdata(args) => cmd_plotdata(&args).map(|()| Status::Converged),
        Command::Oracle(args) => cmd_oracle(&args).map(|()| Status::Converged),
    };
    match result {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::MaxIterations) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(common: &Common) -> CliResult<Scenario> {
    if let Some(eps) = common.eps {
        check_epsilon(eps)?;
    }
    let mut s = Scenario::from_path(&common.scenario)?;
    if let Some(eps) = common.eps {
        s.epsilon = Some(eps);
    }
    if common.seed.is_some() {
        s.seed = common.seed;
    }
    if common.max_rounds.is_some() {
        s.max_rounds = common.max_rounds;
    }
    if let Some(eps) = s.epsilon {
        check_epsilon(eps)?;
    }
    Ok(s)
}

fn check_epsilon(eps: f64) -> CliResult<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")))
    }
}

fn output_format(common: &Common) -> Format {
    common.format.unwrap_or_else(|| match common.out.as_deref().and_then(Path::extension) {
        Some(ext) if ext == "json" => Format::Json,
        _ => Format::Csv,
    })
}

/// Sends `write` to the requested destination; without `--out` nothing is
/// written.
fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match out {
        None => Ok(()),
        Some(p) if p == Path::new("-") => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs) -> CliResult<Status> {
    let s = load_scenario(&args.common)?;
    let out = args.common.out.as_deref();
    let format = output_format(&args.common);
    match args.dim {
        Dim::One => {
            let config = s.dfpa_config();
            config.validate()?;
            let trace = match args.mode {
                Mode::Sim => dfpa(&mut s.cluster()?, s.n, &config)?,
                Mode::Real => {
                    let mut exec = RealExecutor::new(s.processors()?, s.n as usize);
                    exec.repeats = s.real.repeats;
                    dfpa(&mut exec, s.n, &config)?
                }
            };
            eprintln!(
                "{}: {} after {} rounds, imbalance {}, d = {:?}",
                s.name,
                trace.status.as_str(),
                trace.iterations(),
                trace.final_imbalance().map(sig9).unwrap_or_default(),
                &*trace.final_d
            );
            emit(out, |w| match format {
                Format::Csv => export::write_trace_csv(&trace, w),
                Format::Json => export::write_json(&trace, w),
            })?;
            Ok(trace.status)
        }
        Dim::Two => {
            let (m, p, q) = s.grid_shape()?;
            let config = s.grid_config();
            let trace = match args.mode {
                Mode::Sim => dfpa_2d(&mut s.grid()?, m, s.n, &config)?,
                Mode::Real => {
                    let mut exec = RealGridExecutor::new(p, q, s.real.block);
                    exec.repeats = s.real.repeats;
                    dfpa_2d(&mut exec, m, s.n, &config)?
                }
            };
            eprintln!(
                "{}: {} after {} outer rounds ({} inner), global imbalance {}, {} kernel invocations, widths = {:?}",
                s.name,
                trace.status.as_str(),
                trace.outer_iterations(),
                trace.inner_iterations,
                trace.final_global_imbalance().map(sig9).unwrap_or_default(),
                trace.kernel_invocation_count,
                trace.final_partition.widths
            );
            emit(out, |w| match format {
                Format::Csv => export::write_grid_csv(&trace, w),
                Format::Json => export::write_json(&trace, w),
            })?;
            Ok(trace.status)
        }
    }
}

fn join(d: &[u64]) -> String {
    d.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

fn write_comparison_csv(cmp: &Comparison, w: &mut dyn Write) -> CliResult<()> {
    writeln!(w, "strategy,makespan,balancing_s,overhead_ratio,kernel_invocations,iterations,distribution")?;
    for s in &cmp.strategies {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.strategy,
            sig9(s.makespan),
            sig9(s.balancing_seconds),
            sig9(s.overhead_ratio),
            s.kernel_invocations,
            s.iterations,
            join(&s.distribution)
        )?;
    }
    Ok(())
}

fn write_grid_comparison_csv(cmp: &GridComparison, w: &mut dyn Write) -> CliResult<()> {
    writeln!(w, "strategy,makespan,balancing_s,overhead_ratio,kernel_invocations,iterations,widths,heights")?;
    for s in &cmp.strategies {
        let heights: Vec<String> = s.heights.iter().map(|h| join(h)).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.strategy,
            sig9(s.makespan),
            sig9(s.balancing_seconds),
            sig9(s.overhead_ratio),
            s.kernel_invocations,
            s.iterations,
            join(&s.widths),
            heights.join(" | ")
        )?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let s = load_scenario(&args.common)?;
    let format = output_format(&args.common);
    let out = args.common.out.as_deref();
    match args.dim {
        Dim::One => {
            let cmp = compare_1d(&s.seeded_profiles(), s.n, &s.dfpa_config(), s.latency)?;
            for r in &cmp.strategies {
                eprintln!("{:>5}: makespan {} s, d = {:?}", r.strategy, sig9(r.makespan), r.distribution);
            }
            emit(out, |w| match format {
                Format::Csv => write_comparison_csv(&cmp, w),
                Format::Json => export::write_json(&cmp, w),
            })
        }
        Dim::Two => {
            let (m, _, _) = s.grid_shape()?;
            let cmp = compare_2d(&s.grid_profiles()?, m, s.n, &s.grid_config(), s.latency)?;
            for r in &cmp.strategies {
                eprintln!("{:>5}: makespan {} s, widths = {:?}", r.strategy, sig9(r.makespan), r.widths);
            }
            emit(out, |w| match format {
                Format::Csv => write_grid_comparison_csv(&cmp, w),
                Format::Json => export::write_json(&cmp, w),
            })
        }
    }
}

fn cmd_plotdata(args: &PlotArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| Error::Io(format!("{}: {e}", args.trace.display())))?;
    let trace = export::read_trace(&text).map_err(|e| Error::Format(format!("malformed trace: {e}")))?;
    info!("{} rounds read", trace.rounds.len());
    let out = args.out.as_deref().unwrap_or(Path::new("-"));
    emit(Some(out), |w| export::write_plot_csv(&trace, w))
}

#[derive(Serialize)]
struct OracleReport {
    n: u64,
    distribution: Vec<u64>,
    makespan: f64,
}

fn cmd_oracle(args: &OracleArgs) -> CliResult<()> {
    let s = Scenario::from_path(&args.scenario)?;
    s.processors()?;
    let (d, span) = brute_force_optimum(&s.profiles, s.n)?;
    eprintln!("optimum d = {:?}, makespan {} s", &*d, sig9(span));
    let report = OracleReport { n: s.n, distribution: d.into_vec(), makespan: span };
    let out = args.out.as_deref().unwrap_or(Path::new("-"));
    emit(Some(out), |w| export::write_json(&report, w))
}
