mod report;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use scdkit::sim::{run, ScenarioConfig, Trace};

use report::{stats, Format, FuzzSummary, Judgement, RunReport};
use scenario::{build, expand, parse_range, ScenarioArgs};

const TRACE_DIR_VAR: &str = "SCDKIT_TRACE_DIR";
const DEFAULT_TRACE_DIR: &str = "scdkit-traces";

/// Simulate, fuzz and check set-constrained delivery broadcast.
///
/// Exit status: 0 when every check passes (or a run stalls as its crash
/// budget allows), 1 when a property fails, 2 on usage or parse errors.
#[derive(Debug, Parser)]
#[command(name = "scdkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario, write its trace and check it.
    Run(RunArgs),
    /// Run a scenario over many seeds and summarize the verdicts.
    Fuzz(FuzzArgs),
    /// Re-check a stored trace.
    Check(FileArgs),
    /// Summarize a stored trace.
    Stats(FileArgs),
}

#[derive(Debug, Args)]
struct Output {
    /// `text` or `records` (one machine-readable record per line).
    #[arg(long, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Where to write the trace. Defaults to a file in $SCDKIT_TRACE_DIR
    /// or ./scdkit-traces.
    #[arg(long, value_name = "FILE", conflicts_with = "no_trace")]
    trace: Option<PathBuf>,
    #[arg(long)]
    no_trace: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct FuzzArgs {
    /// Scenario flags; `--n` and `--ops` also take inclusive ranges such as
    /// `3..7`, `--t max` picks the largest budget the workload tolerates and
    /// `--crash random:t` crashes that many processes.
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// Do not write traces of failing runs.
    #[arg(long)]
    no_trace: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct FileArgs {
    /// Trace file as written by `run`.
    trace: PathBuf,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Fuzz(args) => cmd_fuzz(args),
        Command::Check(args) => cmd_check(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn exit_for(judgement: Judgement) -> ExitCode {
    match judgement {
        Judgement::Fail => ExitCode::from(1),
        Judgement::Pass | Judgement::ExpectedNonterminating => ExitCode::SUCCESS,
    }
}

fn trace_dir() -> PathBuf {
    std::env::var_os(TRACE_DIR_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_TRACE_DIR))
}

fn trace_name(config: &ScenarioConfig) -> String {
    format!(
        "{}-n{}-t{}-seed{}.trace",
        config.workload, config.n, config.t, config.seed
    )
}

fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, trace.render()).with_context(|| format!("cannot write {}", path.display()))
}

fn read_trace(path: &Path) -> Result<Trace> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Trace::parse(&text).with_context(|| format!("cannot parse {}", path.display()))
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let config = args.scenario.scenario()?;
    let start = Instant::now();
    let outcome = run(&config)?;
    let wall = start.elapsed();
    let report = RunReport::from_trace(&outcome.trace, Some(wall))?;
    print!("{}", report.render(args.output.format));
    if !args.no_trace {
        let path = args
            .trace
            .unwrap_or_else(|| trace_dir().join(trace_name(&config)));
        write_trace(&path, &outcome.trace)?;
        match args.output.format {
            Format::Text => println!("trace     {}", path.display()),
            Format::Records => println!("trace|path={}", path.display()),
        }
    }
    Ok(exit_for(report.judgement()))
}

fn cmd_fuzz(args: FuzzArgs) -> Result<ExitCode> {
    let base = args.scenario.fields()?;
    let (n_lo, n_hi) = parse_range("n", base.get("n").map_or("", String::as_str))?;
    let seed0 = base.get("seed").map_or(Ok(0), |s| s.parse::<u64>())?;
    let jobs: Vec<(u64, u64)> = (n_lo..=n_hi)
        .flat_map(|n| (seed0..seed0 + args.seeds).map(move |s| (n, s)))
        .collect();
    // Validate every expanded config up front so usage errors exit 2
    // before any work is done.
    let configs: Vec<ScenarioConfig> = jobs
        .iter()
        .map(|&(n, seed)| build(&expand(&base, n, seed)?))
        .collect::<Result<_>>()?;
    let write = !args.no_trace;
    let dir = trace_dir();
    let reports: Vec<Result<RunReport, String>> = configs
        .par_iter()
        .map(|config| {
            let outcome = run(config).map_err(|e| e.to_string())?;
            let report = RunReport::from_trace(&outcome.trace, None).map_err(|e| e.to_string())?;
            if write && report.judgement() == Judgement::Fail {
                write_trace(&dir.join(trace_name(config)), &outcome.trace)
                    .map_err(|e| format!("{e:#}"))?;
            }
            Ok(report)
        })
        .collect();
    let mut summary = FuzzSummary::default();
    for r in reports {
        match r {
            Ok(report) => summary.add(&report),
            Err(e) => summary.errors.push(e),
        }
    }
    print!("{}", summary.render(args.output.format));
    Ok(if summary.failed > 0 || !summary.errors.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_check(args: FileArgs) -> Result<ExitCode> {
    let trace = read_trace(&args.trace)?;
    let report = RunReport::from_trace(&trace, None)?;
    print!("{}", report.render(args.output.format));
    Ok(exit_for(report.judgement()))
}

fn cmd_stats(args: FileArgs) -> Result<ExitCode> {
    let trace = read_trace(&args.trace)?;
    print!("{}", stats(&trace, args.output.format)?);
    Ok(ExitCode::SUCCESS)
}
