use std::path::PathBuf;
use std::process::ExitCode;

use amsfl_core::harness::{
    oracle_report, run_experiment, schedule_report, verify, ExperimentConfig, ScheduleRequest,
    Suite,
};
use anyhow::Context;
use clap::{Parser, Subcommand};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "amsfl",
    version,
    about = "Federated learning simulator with budgeted adaptive local steps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, strategy) pair of an experiment config.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a verification suite: identity, gda, scheduler, bounds, baselines or all.
    Verify { suite: String },
    /// Plan one round from a cost-model file and compare with the exhaustive oracle.
    Schedule { cost_model: PathBuf },
    /// Compare the first-round plan of each seed in a config with the exhaustive oracle.
    Oracle { config: PathBuf },
}

enum Failure {
    Config(anyhow::Error),
    Verification(String),
    Runtime(anyhow::Error),
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_file(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, output } => {
            let mut cfg = load_config(&config)?;
            if output.is_some() {
                cfg.output = output;
            }
            let report = run_experiment(&cfg).map_err(|e| match e {
                amsfl_core::Error::Config { .. } => Failure::Config(e.into()),
                e => Failure::Runtime(e.into()),
            })?;
            println!(
                "{:<28} {:>7} {:>11} {:>10} {:>13} {:>9}  status",
                "run", "rounds", "sim_time_s", "s/round", "final_loss", "accuracy"
            );
            for s in report.summaries() {
                println!(
                    "{:<28} {:>7} {:>11.3} {:>10.3} {:>13.6e} {:>9}  {}",
                    s.run_id,
                    s.rounds,
                    s.sim_time_s,
                    s.mean_time_per_round.unwrap_or(0.0),
                    s.final_loss,
                    s.final_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
                    s.status.label(),
                );
            }
            if let Some(dir) = &cfg.output {
                println!("metrics written to {}", dir.display());
            }
            Ok(())
        }
        Command::Verify { suite } => {
            let suite: Suite = suite
                .parse()
                .map_err(|e: amsfl_core::Error| Failure::Config(e.into()))?;
            let reports = verify(suite).map_err(|e| Failure::Runtime(e.into()))?;
            for r in &reports {
                print!("{r}");
            }
            let failed: Vec<_> = reports
                .iter()
                .filter(|r| !r.passed())
                .map(|r| r.suite.name())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Verification(failed.join(", ")))
            }
        }
        Command::Schedule { cost_model } => {
            let req = ScheduleRequest::from_file(&cost_model)
                .with_context(|| format!("reading {}", cost_model.display()))
                .map_err(Failure::Config)?;
            let report = schedule_report(&req).map_err(|e| Failure::Config(e.into()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))?
            );
            Ok(())
        }
        Command::Oracle { config } => {
            let cfg = load_config(&config)?;
            let report = oracle_report(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.into()))?
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verification(suites)) => {
            eprintln!("verification failed: {suites}");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
    }
}
