use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nilwalk::experiments::{write_outputs, Experiment, ExperimentConfig};

/// Random walks on nilpotent covering graphs: batch experiments.
#[derive(Debug, Parser)]
#[command(name = "nilwalk", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config worker count (0 uses all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<Vec<PathBuf>, nilwalk::experiments::ExperimentError> {
        let (mut cfg, hash) = ExperimentConfig::load(&cli.config)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(workers) = cli.workers {
            cfg.workers = workers;
        }
        let out = cli.experiment.run(&cfg)?;
        write_outputs(&cli.out, &out, &hash)
    };
    match run() {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nilwalk {}: {e}", cli.experiment);
            ExitCode::FAILURE
        }
    }
}
