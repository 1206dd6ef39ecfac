use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use kring::{error_line, exit_code, fit_decay_file, run, ConfigError, Experiment, ExperimentConfig};
use kring_core::Exec;

/// Max-min rate experiments for k-ring self-backhauled mmWave networks.
#[derive(Debug, Parser)]
#[command(name = "kring", version)]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for UE placement; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form max-min rate of one deployment.
    Analyze,
    /// Max-min rate against the number of rings.
    SweepK,
    /// Rate CDFs of in-band against out-of-band backhaul.
    OabCompare,
    /// Full- against half-duplex rate over self-interference.
    FullduplexSweep,
    /// Single against dual connectivity rate CDFs.
    Dualconn,
    /// LP max-min rates with and without interference.
    Oracle,
    /// Greedy backpressure simulation.
    Simulate,
    /// Fit alpha/k^beta to a (k, gamma_mbps) CSV.
    FitDecay {
        #[arg(long)]
        input: PathBuf,
    },
}

impl Command {
    fn kind(&self) -> Option<&'static str> {
        Some(match self {
            Command::Analyze => "analyze",
            Command::SweepK => "sweep_k",
            Command::OabCompare => "oab_compare",
            Command::FullduplexSweep => "fullduplex_sweep",
            Command::Dualconn => "dualconn",
            Command::Oracle => "oracle",
            Command::Simulate => "simulate",
            Command::FitDecay { .. } => return None,
        })
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    let default_out = PathBuf::from("out");
    let Some(kind) = cli.command.kind() else {
        let Command::FitDecay { input } = &cli.command else {
            unreachable!()
        };
        let outcome = fit_decay_file(input, cli.out.as_deref().unwrap_or(&default_out))?;
        println!("{}", outcome.summary);
        return Ok(());
    };
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(Experiment::default_for(kind)?),
    };
    if cfg.experiment.kind() != kind {
        return Err(ConfigError(format!(
            "configuration describes a {} experiment, not {kind}",
            cfg.experiment.kind()
        ))
        .into());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.sequential {
        cfg.exec = Exec::Sequential;
    }
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or(default_out);
    let outcome = run(&cfg, &out)?;
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    println!("{}", outcome.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
