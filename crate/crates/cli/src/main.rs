//! `resilience-lab`: command-line front end for the simulator.
//!
//! Subcommands:
//! - `run`: execute one scenario from a config file and report its verdict
//! - `sweep`: sweep corruption levels over seed batches into a CSV landscape
//! - `attack`: run a named adversary script against a base config
//! - `check`: re-verify an exported trace at a given latency bound
//!
//! `RESILIENCE_LAB_SEED` overrides the config seed for `run`, `sweep`, and
//! `attack`. Exit codes: 0 clean, 1 verdict violation, 2 config or I/O error.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use resilience_core::harness::{
    run_scenario, sweep, sweep_sequential, to_csv, AttackKind, ScenarioConfig, ScenarioRun,
};
use resilience_core::trace::Trace;
use resilience_core::verdict::check;

#[derive(Parser)]
#[command(name = "resilience-lab", version, about = "Deterministic SMR resilience simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its verdict.
    Run(RunArgs),
    /// Sweep f over seed batches and write the landscape as CSV.
    Sweep(SweepArgs),
    /// Run a named adversary script on top of a base config.
    Attack(AttackArgs),
    /// Re-verify an exported trace (plain or gzip) at latency u.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Write the full trace to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Gzip the trace output.
    #[arg(long)]
    gzip: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario config; its `f` is replaced per cell.
    #[arg(long)]
    config: PathBuf,
    /// Inclusive corruption range `LO..HI` or a single value; defaults to `0..n`.
    #[arg(long)]
    f: Option<String>,
    /// Seeds per cell, numbered 1..=K.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Force the sequential runner (default uses the parallel feature).
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct AttackArgs {
    /// Adversary script name, e.g. split_brain, four_worlds, ghost_cert.
    #[arg(long)]
    name: String,
    /// Base scenario config.
    #[arg(long)]
    config: PathBuf,
    /// Write the full trace to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Gzip the trace output.
    #[arg(long)]
    gzip: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Trace file produced by `run --trace-out` (gzip detected by magic).
    #[arg(long)]
    trace: PathBuf,
    /// Latency bound in rounds for the liveness check.
    #[arg(long)]
    u: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Check(args) => cmd_check(args),
    };
    result.unwrap_or_else(|msg| {
        eprintln!("error: {msg}");
        ExitCode::from(2)
    })
}

fn load_config(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ScenarioConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Ok(raw) = std::env::var("RESILIENCE_LAB_SEED") {
        cfg.seed = raw
            .trim()
            .parse()
            .map_err(|_| format!("RESILIENCE_LAB_SEED must be an integer, got `{raw}`"))?;
    }
    Ok(cfg)
}

fn write_trace(path: &Path, trace: &Trace, gzip: bool) -> Result<(), String> {
    let text = trace.export();
    let io_err = |e: std::io::Error| format!("{}: {e}", path.display());
    if gzip {
        let file = fs::File::create(path).map_err(io_err)?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(text.as_bytes()).map_err(io_err)?;
        enc.finish().map_err(io_err)?;
    } else {
        fs::write(path, text).map_err(io_err)?;
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<Trace, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let text = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = String::new();
        GzDecoder::new(&bytes[..])
            .read_to_string(&mut out)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        out
    } else {
        String::from_utf8(bytes).map_err(|_| format!("{}: not utf-8", path.display()))?
    };
    Trace::import(&text).map_err(|e| e.to_string())
}

fn print_summary(cfg: &ScenarioConfig, run: &ScenarioRun) {
    println!(
        "{} n={} f={} delta={} attack={} seed={} horizon={} models={}",
        cfg.protocol.label(),
        cfg.n,
        cfg.f,
        cfg.delta,
        cfg.attack.label(),
        cfg.seed,
        cfg.resolved_horizon(),
        cfg.models.label(),
    );
    println!("beta={:.3} trace-hash={:016x}", run.trace.beta(), run.trace.hash());
    println!("{}", run.verdict);
}

fn verdict_exit(run: &ScenarioRun) -> ExitCode {
    if run.verdict.safety.is_safe() && run.verdict.liveness.is_live() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cfg: &ScenarioConfig, trace_out: Option<&Path>, gzip: bool) -> Result<ExitCode, String> {
    let run = run_scenario(cfg).map_err(|e| e.to_string())?;
    print_summary(cfg, &run);
    if let Some(path) = trace_out {
        write_trace(path, &run.trace, gzip)?;
    }
    Ok(verdict_exit(&run))
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, String> {
    let cfg = load_config(&args.config)?;
    execute(&cfg, args.trace_out.as_deref(), args.gzip)
}

fn cmd_attack(args: &AttackArgs) -> Result<ExitCode, String> {
    let mut cfg = load_config(&args.config)?;
    cfg.attack = AttackKind::parse(&args.name)
        .ok_or_else(|| format!("unknown attack script `{}`", args.name))?;
    cfg.validate().map_err(|e| e.to_string())?;
    execute(&cfg, args.trace_out.as_deref(), args.gzip)
}

fn parse_f_range(range: &str) -> Result<Vec<u16>, String> {
    let range = range.trim();
    if let Some((lo, hi)) = range.split_once("..") {
        let lo: u16 = lo.trim().parse().map_err(|_| format!("bad f range `{range}`"))?;
        let hi: u16 = hi.trim().parse().map_err(|_| format!("bad f range `{range}`"))?;
        if lo > hi {
            return Err(format!("empty f range `{range}`"));
        }
        Ok((lo..=hi).collect())
    } else {
        range.parse().map(|f| vec![f]).map_err(|_| format!("bad f value `{range}`"))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, String> {
    let cfg = load_config(&args.config)?;
    let fs_range = match &args.f {
        Some(range) => parse_f_range(range)?,
        None => (0..=cfg.n).collect(),
    };
    if args.seeds == 0 {
        return Err("need at least one seed".into());
    }
    let seeds: Vec<u64> = (1..=args.seeds).collect();
    let rows = if args.sequential {
        sweep_sequential(&cfg, &fs_range, &seeds)
    } else {
        sweep(&cfg, &fs_range, &seeds)
    };
    let csv = to_csv(&rows);
    fs::write(&args.out, &csv).map_err(|e| format!("{}: {e}", args.out.display()))?;
    print!("{csv}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode, String> {
    let trace = read_trace(&args.trace)?;
    let verdict = check(&trace, args.u);
    verdict
        .reverify(&trace, args.u)
        .map_err(|e| format!("verdict evidence failed its own audit: {e}"))?;
    println!(
        "{} clients={} rounds={} beta={:.3} trace-hash={:016x}",
        trace.protocol_label,
        trace.clients.len(),
        trace.horizon + 1,
        trace.beta(),
        trace.hash(),
    );
    println!("{verdict}");
    Ok(if verdict.safety.is_safe() && verdict.liveness.is_live() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
