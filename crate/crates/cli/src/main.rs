//! `viscohom`: runs corrector, effective-Hamiltonian and homogenization
//! experiments from a TOML config and writes CSV plus a JSON sidecar.
//!
//! Exit codes: 0 on success, 1 when a numerical check fails, 2 on a config error.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;
use viscohom_core::Error;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "viscohom", version, about = "Viscous Hamilton-Jacobi homogenization lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replaces `env.seed`.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Sample the environment and write it in columnar form.
    GenEnv,
    /// Corrector derivative on a region.
    Corrector,
    /// Ergodic averages theta(lambda) on both branches.
    ThetaCurve,
    /// Tabulate the effective Hamiltonian.
    Effective,
    /// Rescaled PDE runs from linear data.
    Homogenize,
    /// Look for a hill witness.
    HillCheck,
    /// Sub- and supersolution residual probes.
    Probe,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenEnv => "gen-env",
            Command::Corrector => "corrector",
            Command::ThetaCurve => "theta-curve",
            Command::Effective => "effective",
            Command::Homogenize => "homogenize",
            Command::HillCheck => "hill-check",
            Command::Probe => "probe",
        }
    }
}

/// A run failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input; exit code 2.
    Config(anyhow::Error),
    /// A numerical check or invariant failed; exit code 1.
    Check(anyhow::Error),
}

impl Failure {
    pub fn from_core(e: Error) -> Failure {
        match e {
            Error::UnknownKind(_)
            | Error::WindowTooSmall { .. }
            | Error::OutOfWindow { .. }
            | Error::InvalidParameter(_)
            | Error::Parse(_)
            | Error::NegativeLevel(_)
            | Error::LevelBelowThreshold { .. }
            | Error::CflViolated { .. }
            | Error::GrowthViolated(_)
            | Error::OutsideTable { .. } => Failure::Config(e.into()),
            _ => Failure::Check(e.into()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Check(_) => 1,
        }
    }
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let start = Instant::now();
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| config::config_err("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed_override {
        cfg.env.seed = Some(seed);
    }
    cfg.validate()?;
    let out = cfg.out_dir(cli.out.as_deref());
    fs::create_dir_all(&out)
        .map_err(|e| Failure::Check(anyhow::anyhow!("cannot create {}: {e}", out.display())))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(config::config_err("--workers must be positive"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Check(anyhow::anyhow!("thread pool: {e}")))?;
    let cmd = cli.command;
    let report = pool.install(|| match cmd {
        Command::GenEnv => commands::gen_env(&cfg, &out),
        Command::Corrector => commands::corrector(&cfg, &out),
        Command::ThetaCurve => commands::theta_curve(&cfg, &out),
        Command::Effective => commands::effective(&cfg, &out),
        Command::Homogenize => commands::homogenize(&cfg, &out),
        Command::HillCheck => commands::hill_check(&cfg, &out),
        Command::Probe => commands::probe(&cfg, &out),
    })?;
    let sidecar = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "workers": pool.current_num_threads(),
        "outputs": report.outputs,
        "passed": report.passed,
        "summary": report.summary,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let side = out.join(format!("{}.json", cmd.name()));
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Failure::Check(anyhow::anyhow!("sidecar: {e}")))?;
    fs::write(&side, text + "\n")
        .map_err(|e| Failure::Check(anyhow::anyhow!("cannot write {}: {e}", side.display())))?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("viscohom {}: check failed", cli.command.name());
            ExitCode::from(1)
        }
        Err(f) => {
            let (Failure::Config(e) | Failure::Check(e)) = &f;
            eprintln!("viscohom {}: {e:#}", cli.command.name());
            ExitCode::from(f.exit_code())
        }
    }
}
