use std::path::PathBuf;
use std::process::ExitCode;

use attractor_sim::run::Experiment;
use attractor_sim::{execute, load_config};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "attractor-sim",
    version,
    about = "Collusion experiments on attractor-rewritten model copies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Probabilistic copy model: transfer rate against colluder count.
    Sim1(Common),
    /// Geometric copy model over unions of balls.
    Sim2(Common),
    /// Single-copy attack replayed on a victim copy.
    Replication(Common),
    /// Transfer rate as colluding copies are added.
    Collusion(Common),
    /// Score-shift decomposition of successful attacks.
    Shift(Common),
    /// Calibrate the adaptive weight policy.
    Calibrate(Common),
    /// Accuracy of the original model and both copy policies.
    Accuracy(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Sim1(c) => (Experiment::Sim1, c),
        Command::Sim2(c) => (Experiment::Sim2, c),
        Command::Replication(c) => (Experiment::Replication, c),
        Command::Collusion(c) => (Experiment::Collusion, c),
        Command::Shift(c) => (Experiment::Shift, c),
        Command::Calibrate(c) => (Experiment::Calibrate, c),
        Command::Accuracy(c) => (Experiment::Accuracy, c),
    };
    if common.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let cfg = match load_config(common.config.as_deref(), common.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(experiment, &cfg, common.threads, &common.out) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
