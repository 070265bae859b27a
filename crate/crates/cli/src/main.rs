use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Phased-reopening transit scenarios on a desk-scale agent-based simulation.
#[derive(Parser, Debug)]
#[command(name = "reopen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Day-loop iterations (per loss evaluation for `calibrate`).
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the population and agendas of a scenario's phase.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Fit the constant shifts to observed trip reductions.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario (or `all`) and write its report next to the baseline.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        capacity_factor: Option<f64>,
    },
    /// Compare two scenario reports.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Baseline report directory or report.json.
        base: PathBuf,
        /// Report compared against the baseline.
        other: PathBuf,
    },
    /// Summarise every report in the output directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, calibrating: bool) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.iterations {
        if calibrating {
            cfg.calibration.engine_iterations = n;
        } else {
            cfg.iterations = n;
        }
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { common, scenario } => commands::synth(&load(&common, false)?, scenario.as_deref())?,
        Command::Calibrate { common } => {
            if !commands::calibrate_cmd(&load(&common, true)?)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Run {
            common,
            scenario,
            capacity_factor,
        } => commands::run(&load(&common, false)?, &scenario, capacity_factor)?,
        Command::Compare { common, base, other } => {
            let mut cfg = common.config.as_ref().map(|p| RunConfig::load(p)).transpose()?.unwrap_or_default();
            if let Some(o) = &common.out {
                cfg.out = o.clone();
            }
            commands::compare(&cfg, &base, &other, common.out.as_deref())?
        }
        Command::Report { common } => commands::report(&load(&common, false)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
