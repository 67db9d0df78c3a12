//! `orbopt`: runs one experiment described by a config file.
//!
//! Exit status: 0 success, 1 runtime or I/O failure, 2 invalid config,
//! 3 capacity exceeded, 4 convergence failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use orbopt::config::Overrides;
use orbopt::runner::{run_experiment, RunError};

#[derive(Debug, Parser)]
#[command(name = "orbopt", version, about = "Variational ground states with orbital rotations")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent restarts and scan points.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Enumerate the sector instead of sampling.
    #[arg(long)]
    exact_mode: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let overrides = Overrides {
        output: cli.output,
        seed: cli.seed,
        exact_mode: cli.exact_mode,
    };
    match run_experiment(&cli.config, &overrides, cli.threads.max(1)) {
        Ok((dir, out)) => {
            println!("wrote {}: {}", dir.display(), out.outputs.names().join(", "));
            match out.unconverged {
                Some(msg) => {
                    let e = RunError::Convergence(msg);
                    eprintln!("orbopt: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("orbopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
