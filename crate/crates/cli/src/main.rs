//! `choquard`: configured experiment runs with a manifest per run.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use config::RunConfig;
use failure::Failure;
use output::Artifacts;

#[derive(Parser)]
#[command(name = "choquard", version, about = "Normalized ground states and dynamics of Choquard equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config, or a manifest.json of an earlier run
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted override, e.g. `--set problem.p=2.5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (overrides outputs.directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; falls back to CHOQUARD_THREADS
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write into a nonempty output directory
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Minimize the energy on the mass sphere (subcritical)
    SolveSub,
    /// Minimize the energy on the Pohozaev manifold (supercritical)
    SolveSuper,
    /// sigma(c) over sweep.masses
    SigmaCurve,
    /// m(c) over sweep.masses
    MCurve,
    /// t -> I(u^t) on a log grid
    FiberScan,
    /// Subadditivity, limit comparison, scaling and truncation audits
    AuditSub,
    /// Fiber shape, dominance, minimax and kinetic-floor audits
    AuditSuper,
    /// Hypothesis checks of the coefficient
    CheckCoeff,
    /// Split-step evolution from the ground state
    Evolve,
    /// Perturbed-orbit stability experiment
    Stability,
    /// Oracle suites on small grids
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::SolveSub => "solve-sub",
            Command::SolveSuper => "solve-super",
            Command::SigmaCurve => "sigma-curve",
            Command::MCurve => "m-curve",
            Command::FiberScan => "fiber-scan",
            Command::AuditSub => "audit-sub",
            Command::AuditSuper => "audit-super",
            Command::CheckCoeff => "check-coeff",
            Command::Evolve => "evolve",
            Command::Stability => "stability",
            Command::Selftest => "selftest",
        }
    }
}

fn threads(cli: &Cli) -> Result<Option<usize>, Failure> {
    if let Some(k) = cli.threads {
        return Ok(Some(k));
    }
    match std::env::var("CHOQUARD_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("CHOQUARD_THREADS = {v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let mut cfg: RunConfig = config::load(cli.config.as_deref(), &cli.overrides).map_err(Failure::Config)?;
    if let Some(dir) = &cli.out {
        cfg.outputs.directory = dir.clone();
    }
    cfg.spec()?;
    let threads = threads(cli)?;
    if let Some(k) = threads {
        if k == 0 {
            return Err(Failure::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let out = Artifacts::create(&cfg.outputs.directory, cli.force)?;
    out.json(
        "manifest.json",
        &serde_json::json!({
            "program": "choquard",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": cli.command.name(),
            "seed": cfg.dynamics.seed,
            "threads": threads.unwrap_or_else(rayon::current_num_threads),
            "overrides": cli.overrides,
            "config": cfg,
        }),
    )?;
    info!("{} writing to {}", cli.command.name(), cfg.outputs.directory.display());
    match cli.command {
        Command::SolveSub => commands::solve_sub(&cfg, &out),
        Command::SolveSuper => commands::solve_super(&cfg, &out),
        Command::SigmaCurve => commands::sigma_curve(&cfg, &out),
        Command::MCurve => commands::m_curve_cmd(&cfg, &out),
        Command::FiberScan => commands::fiber_scan(&cfg, &out),
        Command::AuditSub => commands::audit_sub(&cfg, &out),
        Command::AuditSuper => commands::audit_super(&cfg, &out),
        Command::CheckCoeff => commands::check_coeff(&cfg, &out),
        Command::Evolve => commands::evolve_cmd(&cfg, &out),
        Command::Stability => commands::stability(&cfg, &out),
        Command::Selftest => commands::selftest(&out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}: {summary}", cli.command.name());
            ExitCode::SUCCESS
        }
        Err(fail) => {
            eprintln!("{}: {fail}", cli.command.name());
            ExitCode::from(fail.exit_code() as u8)
        }
    }
}
