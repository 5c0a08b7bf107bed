use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use tlc_core::SimMode;
use tlc_experiments::{parse_config, run_scenario, ExperimentConfig, Scenario};

/// Quasi-dynamic traffic light control experiments.
#[derive(Parser, Debug)]
#[command(name = "tlc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Arrival model, overrides the config.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One sample path: event trace, cost and IPA gradient.
    Simulate,
    /// Batch gradient descent from the initial parameters.
    Optimize,
    /// Windowed online adaptation along one long path.
    Online,
    /// IPA gradient against central finite differences.
    ValidateGradient,
    /// Batch optimization over a list of interarrival vectors.
    Sweep,
    /// Uncontrolled junction vs controller across rate scalings.
    CompareBaseline,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Fluid,
    Discrete,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Simulate => Scenario::Simulate,
            Command::Optimize => Scenario::Optimize,
            Command::Online => Scenario::Online,
            Command::ValidateGradient => Scenario::ValidateGradient,
            Command::Sweep => Scenario::Sweep,
            Command::CompareBaseline => Scenario::CompareBaseline,
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let started = Instant::now();
    match run_scenario(&cfg) {
        Ok(outcome) => {
            eprintln!(
                "{} finished in {:.1} s, artifacts in {}",
                cfg.scenario(),
                started.elapsed().as_secs_f64(),
                outcome.out_dir.display()
            );
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(mode) = cli.mode {
        cfg.mode = Some(match mode {
            ModeArg::Fluid => SimMode::Fluid,
            ModeArg::Discrete => SimMode::Discrete,
        });
    }
    Ok(cfg.resolve(cli.command.scenario())?)
}
