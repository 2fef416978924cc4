//! `singlab`: run scenario files, capacity studies and the built-in oracle
//! suite.
//!
//! Exit status: 0 success, 2 unreadable or invalid configuration, 3 solver
//! failure (partial artifacts written), 4 failed checks (artifacts complete).

// `!(x > 0.0)` style guards reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;
mod run;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use crate::config::ScenarioConfig;
use crate::run::{Check, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CHECKS: u8 = 4;

#[derive(Parser)]
#[command(name = "singlab", version, about = "Singular elliptic problems with measure data")]
struct Cli {
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ladders (and optional studies) of a scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// Override the ladder schedule, e.g. `10,100,1000`.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Run the built-in oracle suite.
    Validate {
        #[command(flatten)]
        out: OutArg,
    },
    /// Run only the capacity study of a scenario.
    Capacity {
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct OutArg {
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "error" } else { "info" }))
        .format_timestamp(None)
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Run { config, out, levels } => {
            let Some(mut cfg) = load(config) else {
                return Ok(EXIT_CONFIG);
            };
            if let Some(levels) = levels {
                cfg.ladder.schedule = Some(levels.clone());
                if let Err(e) = cfg.validate() {
                    error!("--levels: {e}");
                    return Ok(EXIT_CONFIG);
                }
            }
            run_command(&cfg, &out_dir(&cfg, out), cli.quiet)
        }
        Command::Capacity { config, out } => {
            let Some(cfg) = load(config) else {
                return Ok(EXIT_CONFIG);
            };
            capacity_command(&cfg, &out_dir(&cfg, out), cli.quiet)
        }
        Command::Validate { out } => {
            let checks = validate::run_validation();
            let pass = checks.iter().all(|c| c.pass);
            if !cli.quiet {
                print_checks(&checks);
            }
            if let Some(dir) = &out.out {
                std::fs::create_dir_all(dir)?;
                report::write_json(&dir.join("validation.json"), &checks)?;
            }
            Ok(if pass { 0 } else { EXIT_CHECKS })
        }
    }
}

fn load(path: &Path) -> Option<ScenarioConfig> {
    match ScenarioConfig::load(path) {
        Ok(cfg) => Some(cfg),
        Err(e) => {
            error!("{}: {e}", path.display());
            None
        }
    }
}

fn out_dir(cfg: &ScenarioConfig, out: &OutArg) -> PathBuf {
    out.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn run_command(cfg: &ScenarioConfig, dir: &Path, quiet: bool) -> anyhow::Result<u8> {
    let outcome = match run::run_scenario(cfg, quiet) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            error!("{e}");
            return Ok(EXIT_CONFIG);
        }
        Err(RunError::Solver(msg)) => {
            error!("solver failure: {msg}");
            return Ok(EXIT_SOLVER);
        }
    };
    let summary = report::summarize(cfg.gamma, cfg.domain.dim, cfg.domain.resolution, &outcome);
    report::emit(dir, &cfg.diagnostics.trace_eps, &summary, &outcome)?;
    std::fs::write(dir.join("scenario.toml"), cfg.to_toml())?;
    if !quiet {
        print_checks(&outcome.checks);
        println!("{}: {} ({})", summary.status, summary.flag, dir.display());
    }
    Ok(if outcome.solver_failed() {
        for s in &outcome.schemes {
            if let Some(f) = &s.result.failure {
                error!("{}: {}", s.result.scheme.name(), f.message);
            }
        }
        EXIT_SOLVER
    } else if outcome.checks_passed() {
        0
    } else {
        EXIT_CHECKS
    })
}

fn capacity_command(cfg: &ScenarioConfig, dir: &Path, quiet: bool) -> anyhow::Result<u8> {
    let cap = match run::run_capacity(cfg, quiet) {
        Ok(c) => c,
        Err(RunError::Config(e)) => {
            error!("{e}");
            return Ok(EXIT_CONFIG);
        }
        Err(RunError::Solver(msg)) => {
            error!("solver failure: {msg}");
            return Ok(EXIT_SOLVER);
        }
    };
    std::fs::create_dir_all(dir)?;
    report::write_capacity(std::fs::File::create(dir.join("capacity.csv"))?, cap.p, &cap.points)?;
    report::write_json(&dir.join("summary.json"), &cap)?;
    if !quiet {
        println!(
            "capacity trend {:?}, rule verdict {:?}, {} ({})",
            cap.trend,
            cap.rule_verdict,
            if cap.consistent { "consistent" } else { "inconsistent" },
            dir.display()
        );
    }
    Ok(if cap.consistent { 0 } else { EXIT_CHECKS })
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}
