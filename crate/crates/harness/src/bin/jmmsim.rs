use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jmmsim::{Experiment, ExperimentConfig, HarnessError, Scenario};

/// Run one scenario of the simulated tendon-driven arm.
#[derive(Debug, Parser)]
#[command(name = "jmmsim", version)]
struct Cli {
    /// train-initial, jacobian-sweep, antagonism-elbow, vision-repair,
    /// combined-quant or reach-target.
    scenario: Scenario,
    /// TOML config; omitted fields take the desk-arm defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the full-size network (1000 hidden units).
    #[arg(long)]
    faithful_scale: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.faithful_scale {
        cfg.apply_faithful_scale();
    }
    let result = Experiment::prepare(&cfg).and_then(|exp| {
        let outcome = jmmsim::run(cli.scenario, &exp)?;
        outcome.write_to(&cli.out)?;
        if cli.scenario == Scenario::TrainInitial {
            exp.initial.save(cli.out.join("mapping.jmm"))?;
        }
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
