use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sltcrit_cli::{run_experiment, write_outputs, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "sltcrit", version, about = "Information criteria replication harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One n, R replications.
    Run(Common),
    /// Every n in the grid.
    SweepN(Common),
    /// MCMC against the conjugate closed forms.
    OracleCheck(Common),
    /// Equation-of-state residuals.
    EosCheck(Common),
    /// Linked estimator against WAIC at beta = 1.
    LinkedCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn split(self) -> (Mode, Common) {
        match self {
            Command::Run(c) => (Mode::Run, c),
            Command::SweepN(c) => (Mode::SweepN, c),
            Command::OracleCheck(c) => (Mode::OracleCheck, c),
            Command::EosCheck(c) => (Mode::EosCheck, c),
            Command::LinkedCheck(c) => (Mode::LinkedCheck, c),
        }
    }
}

fn execute(cli: Cli) -> Result<Option<bool>> {
    let (mode, args) = cli.command.split();
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if cfg.mode != mode {
        bail!("{} declares mode {:?}, but the {:?} subcommand was used", args.config.display(), cfg.mode, mode);
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let output = run_experiment(&cfg)?;
    let paths = write_outputs(&cfg.output_dir, &cfg, &output)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if !output.failed.is_empty() {
        eprintln!("{} replication(s) failed; see {}", output.failed.len(), paths[0].display());
    }
    let verdict = output.passed();
    match verdict {
        Some(true) => println!("{mode:?}: PASS"),
        Some(false) => println!("{mode:?}: FAIL"),
        None => {}
    }
    Ok(verdict)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Some(false)) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
