mod commands;
mod config;
mod fail;
mod output;
mod world;

use clap::{Args, Parser, Subcommand};
use fail::Failure;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "lomap", version, about = "Guided diffusion planning with local manifold projection")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Shared {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// key=value file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override any config key, as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an offline dataset (LMPD).
    GenData(commands::gen_data::Flags),
    /// Train a denoiser and/or return guide (LMPC) and write loss curves.
    Train(commands::train::Flags),
    /// Run receding-horizon episodes in a maze.
    Plan(commands::plan::Flags),
    /// Paired artifact-ratio sweep, realism and dynamic MSE.
    Eval(commands::eval::Flags),
    /// Guidance-gap scaling experiment.
    Gap(commands::gap::Flags),
    /// Render trajectories over a maze as SVG.
    Plot(commands::plot::Flags),
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.shared.threads {
        if n == 0 {
            return Err(Failure::Param("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Param(e.to_string()))?;
    }
    let shared = &cli.shared;
    match cli.command {
        Command::GenData(f) => commands::gen_data::run(shared, f),
        Command::Train(f) => commands::train::run(shared, f),
        Command::Plan(f) => commands::plan::run(shared, f),
        Command::Eval(f) => commands::eval::run(shared, f),
        Command::Gap(f) => commands::gap::run(shared, f),
        Command::Plot(f) => commands::plot::run(shared, f),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lomap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
