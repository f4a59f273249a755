//! `subcrit-cp`: spectral and Monte Carlo computations for subcritical contact processes.
//!
//! Exit codes: 0 success, 1 config error, 2 computation error, 3 invariant failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{write_file, ResultDocument};

#[derive(Parser, Debug)]
#[command(name = "subcrit-cp", version, about = "Growth rates, quasi-invariant laws and eigenmeasures of subcritical contact processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; the document goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overriding `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Perron pairs of the truncated forward and dual chains.
    Spectrum,
    /// Survival and size statistics plus a few event logs.
    Simulate,
    /// Spectral and Monte Carlo growth rates over the delta grid.
    Growth,
    /// Normalized eigenmeasures and convergence of the conditioned law.
    Eigenmeasure,
    /// Derivative formula against finite differences and the Russo integrand.
    Derivative,
    /// r(delta) table over the delta grid with audits; writes sweep.csv.
    Sweep,
    /// Bisection interval for the critical recovery rate.
    DeltaC,
    /// Invariant suite; fails with exit code 3 if any property fails.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::Growth => "growth",
            Command::Eigenmeasure => "eigenmeasure",
            Command::Derivative => "derivative",
            Command::Sweep => "sweep",
            Command::DeltaC => "delta-c",
            Command::Check => "check",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let setup = cfg.validate()?;
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx { cfg: &cfg, setup, seed: cfg.mc.seed, out: cli.out.clone() };
    let start = Instant::now();
    let mut invariant_failures = 0;
    let results = match cli.command {
        Command::Spectrum => commands::spectrum(&ctx)?,
        Command::Simulate => commands::simulate(&ctx)?,
        Command::Growth => commands::growth(&ctx)?,
        Command::Eigenmeasure => commands::eigenmeasure_cmd(&ctx)?,
        Command::Derivative => commands::derivative(&ctx)?,
        Command::Sweep => {
            let (doc, csv) = commands::sweep(&ctx)?;
            match &cli.out {
                Some(out) => write_file(out, "sweep.csv", &csv)?,
                None => eprint!("{csv}"),
            }
            doc
        }
        Command::DeltaC => commands::delta_c(&ctx)?,
        Command::Check => {
            let (doc, failed) = commands::check(&ctx)?;
            invariant_failures = failed;
            doc
        }
    };
    let doc = ResultDocument {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: ctx.seed,
        config: &cfg,
        results,
        wall_clock_seconds: cfg.record_wall_clock.then(|| start.elapsed().as_secs_f64()),
    };
    let text = doc.to_json();
    match &cli.out {
        Some(out) => write_file(out, &format!("{}.json", cli.command.name()), &text)?,
        None => print!("{text}"),
    }
    if invariant_failures > 0 {
        return Err(CliError::Invariant(invariant_failures));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subcrit-cp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
