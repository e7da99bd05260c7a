use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use stufflab::harness::report::{render_table, to_json};
use stufflab::harness::{load_scenario, RunReport, ScenarioConfig, Trace};
use stufflab::simnet;

#[derive(Parser)]
#[command(name = "stufflab", version, about = "Run, sweep, check and replay consensus scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Trace and report files plus the table on stdout.
    Jsonl,
    /// The table only.
    Summary,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and audit the trace.
    Run {
        /// Scenario file, or `preset:NAME`.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
    },
    /// Run a grid of cells over one varied key and several seeds.
    Sweep {
        scenario: String,
        /// `KEY=V1,V2,...`, any scenario key.
        #[arg(long)]
        vary: String,
        /// Seeds per value, counting up from the scenario seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Also write the combined report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the checkers on a stored trace.
    Check { trace: PathBuf },
    /// Re-run a scenario and compare its trace byte for byte.
    Replay {
        scenario: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        expect: PathBuf,
    },
}

fn scenario_with_seed(path: &str, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = load_scenario(path)?;
    if let Some(s) = seed {
        cfg.set("seed", &s.to_string())?;
    }
    Ok(cfg)
}

fn simulate(cfg: &ScenarioConfig) -> Result<Trace> {
    Ok(simnet::run(cfg)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(scenario: &str, seed: Option<u64>, out: &Path, format: Format) -> Result<bool> {
    let cfg = scenario_with_seed(scenario, seed)?;
    let trace = simulate(&cfg)?;
    let report = RunReport::from_trace(&trace);
    if format == Format::Jsonl {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write(&out.join("trace.jsonl"), &trace.to_jsonl())?;
        write(&out.join("report.json"), &to_json(std::slice::from_ref(&report)))?;
    }
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(report.passed())
}

fn sweep(scenario: &str, vary: &str, seeds: u64, out: Option<&Path>) -> Result<bool> {
    let base = scenario_with_seed(scenario, None)?;
    let (key, values) = vary
        .split_once('=')
        .ok_or_else(|| anyhow!("--vary expects KEY=V1,V2,..., got {vary:?}"))?;
    let mut cells = Vec::new();
    for (vi, value) in values.split(',').map(str::trim).filter(|v| !v.is_empty()).enumerate() {
        for k in 0..seeds {
            let mut cfg = base.clone();
            cfg.set(key, value)?;
            cfg.set("seed", &(base.seed + k).to_string())?;
            cfg.validate()?;
            cells.push(((vi, k), cfg));
        }
    }
    if cells.is_empty() {
        bail!("--vary {vary:?} names no values");
    }
    let mut results: Vec<((usize, u64), Result<RunReport>)> = cells
        .par_iter()
        .map(|(key, cfg)| (*key, simulate(cfg).map(|t| RunReport::from_trace(&t))))
        .collect();
    results.sort_by_key(|(key, _)| *key);
    let reports = results
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("report.json"), &to_json(&reports))?;
    }
    print!("{}", render_table(&reports));
    Ok(reports.iter().all(RunReport::passed))
}

fn read_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(Trace::from_jsonl(&text)?)
}

fn check(path: &Path) -> Result<bool> {
    let report = RunReport::from_trace(&read_trace(path)?);
    print!("{}", render_table(std::slice::from_ref(&report)));
    Ok(report.passed())
}

fn replay(scenario: &str, seed: u64, expect: &Path) -> Result<bool> {
    let cfg = scenario_with_seed(scenario, Some(seed))?;
    let expected = fs::read_to_string(expect).with_context(|| expect.display().to_string())?;
    let actual = simulate(&cfg)?.to_jsonl();
    if actual == expected {
        println!("replay identical: {} lines", actual.lines().count());
        return Ok(true);
    }
    let mut a = actual.lines();
    let mut e = expected.lines();
    let mut line = 1;
    loop {
        match (a.next(), e.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (x, y) => {
                println!("replay differs at line {line}");
                println!("  expected: {}", y.unwrap_or("<end of file>"));
                println!("  actual:   {}", x.unwrap_or("<end of trace>"));
                return Ok(false);
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario, seed, out, format } => run(&scenario, seed, &out, format),
        Command::Sweep { scenario, vary, seeds, out } => sweep(&scenario, &vary, seeds, out.as_deref()),
        Command::Check { trace } => check(&trace),
        Command::Replay { scenario, seed, expect } => replay(&scenario, seed, &expect),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        // Bad scenarios, unreadable traces and I/O failures.
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
