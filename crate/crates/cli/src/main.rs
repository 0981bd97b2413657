use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use macrocollapse_cli::config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "macrocollapse", version, about = "Simulate macroscopic superposition reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, seed, threads, output } = Cli::parse().command;
    let overrides = Overrides { seed, threads, output_dir: output };
    let result = ExperimentConfig::load(&config, &overrides).and_then(|cfg| macrocollapse_cli::run(&cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
