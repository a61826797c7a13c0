use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qedsim::cli::{execute, Command};
use qedsim::config::ExperimentConfig;
use qedsim::Error;

#[derive(Parser)]
#[command(name = "qedsim", version, about = "Many-server queues with lattice service in the Halfin-Whitt regime")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.workers` (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print derived constants (θ*, Σ, α, Γ, ψ).
    Model(Common),
    /// Embedded n-server chain; writes a slot trace.
    SimulateFinite(Common),
    /// Limiting chain; writes a trajectory.
    SimulateLimit(Common),
    /// Event-driven n-server simulation; writes customer records.
    SimulateEvent(Common),
    /// Stationary histogram, mean and atom at zero.
    Estimate(Common),
    /// Tail exponent fit and MGF sweep on the limiting chain.
    Exponent(Common),
    /// Lyapunov drift ratios.
    Drift(Common),
    /// Pathwise invariant checks on short runs; exits 4 on any violation.
    Validate(Common),
    /// Finite-n vs limit KS distances over `run.n`.
    Compare(Common),
    /// Whatever `run.mode` asks for.
    Run(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output.directory = out.clone();
    }
    if let Some(w) = c.workers {
        cfg.run.workers = w;
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cmd, common) = match &args.command {
        Cmd::Model(c) => (Command::Model, c),
        Cmd::SimulateFinite(c) => (Command::SimulateFinite, c),
        Cmd::SimulateLimit(c) => (Command::SimulateLimit, c),
        Cmd::SimulateEvent(c) => (Command::SimulateEvent, c),
        Cmd::Estimate(c) => (Command::Estimate, c),
        Cmd::Exponent(c) => (Command::Exponent, c),
        Cmd::Drift(c) => (Command::Drift, c),
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Compare(c) => (Command::Compare, c),
        Cmd::Run(c) => (Command::Run, c),
    };
    match load(common).and_then(|cfg| execute(cmd, &cfg)) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = e.report();
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(report.exit_code as u8)
        }
    }
}
