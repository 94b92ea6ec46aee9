use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pseudop_cli::{parse_config, run, Kind, RunContext};

#[derive(Parser)]
#[command(
    name = "pseudop",
    version,
    about = "Numerical experiments for degenerate pseudo-p-Laplacian inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dirichlet solve or manufactured-solution convergence study
    Solve(Common),
    /// Barrier exponent selection and residual verification
    BarrierVerify(Common),
    /// Sliding-paraboloid measure experiment on a field
    Slide(Common),
    /// Inf-convolution of a field with semiconcavity diagnostics
    Infconv(Common),
    /// Harnack ratio on the half ball
    Harnack(Common),
    /// Hölder exponent from oscillation decay
    Holder(Common),
    /// Level-set tail and power-law fit
    Tail(Common),
    /// Calderón-Zygmund hypothesis and conclusion check on random sets
    CzCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json, CSV tables and SVG plots
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized instance generation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    verbose: bool,
}

impl Command {
    fn split(self) -> (Kind, Common) {
        match self {
            Command::Solve(c) => (Kind::Solve, c),
            Command::BarrierVerify(c) => (Kind::BarrierVerify, c),
            Command::Slide(c) => (Kind::Slide, c),
            Command::Infconv(c) => (Kind::Infconv, c),
            Command::Harnack(c) => (Kind::Harnack, c),
            Command::Holder(c) => (Kind::Holder, c),
            Command::Tail(c) => (Kind::Tail, c),
            Command::CzCheck(c) => (Kind::CzCheck, c),
        }
    }
}

/// Usage and configuration problems exit 1, failed experiment checks exit 2.
fn execute(kind: Kind, args: Common) -> anyhow::Result<bool> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let cfg =
        parse_config(&text, &base).with_context(|| format!("in {}", args.config.display()))?;
    if cfg.kind != kind {
        bail!(
            "config {} describes a `{}` experiment, not `{kind}`",
            args.config.display(),
            cfg.kind
        );
    }
    let ctx = RunContext {
        out: args.out,
        seed: args.seed,
        verbose: args.verbose,
    };
    let outcome = run(&cfg, &ctx)?;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {}: {}", c.name, c.detail);
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (kind, args) = cli.command.split();
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
