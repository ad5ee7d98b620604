use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod study;

/// Sticky-particle opinion dynamics and verification of its mean-field limit.
#[derive(Parser)]
#[command(name = "opinion-flow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle system and write trajectory, events, shocks and CDFs.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a simulation directory: RH, Oleinik and the Kruzkov battery.
    Verify {
        dir: PathBuf,
        /// TOML file with alphas, windows and anchors; overrides [verify].
        #[arg(long)]
        battery: Option<PathBuf>,
    },
    /// Run the studies listed in a manifest and write a summary.
    Study {
        manifest: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, output_dir } => commands::cmd_simulate(config, output_dir.as_deref()).map(|_| ()),
        Command::Verify { dir, battery } => commands::cmd_verify(dir, battery.as_deref()).map(|_| ()),
        Command::Study { manifest, output_dir } => study::cmd_study(manifest, output_dir.as_deref()).map(|_| ()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
