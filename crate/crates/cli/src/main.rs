use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use livepaper_cli::commands::{self, CliError, ServeOptions};
use livepaper_cli::config::Settings;

#[derive(Parser)]
#[command(name = "livepaper", version, about = "Advisory tabletop engine")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Rate table (`kind term rate` per line).
    #[arg(long, global = true)]
    rate_table: Option<PathBuf>,
    /// Affordability parameters (TOML).
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Host sessions over websocket.
    Serve {
        /// Listen address (default 127.0.0.1:8750).
        #[arg(long)]
        listen: Option<String>,
        /// Directory with the tabletop UI's static files.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        /// Directory for per-session journals.
        #[arg(long)]
        journal_dir: Option<PathBuf>,
    },
    /// Replay a journal and print the final state.
    Replay {
        journal: PathBuf,
        /// Print the canonical state JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Check a journal's invariants; exit 1 on any violation.
    Verify {
        journal: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario script; exit 1 if any check fails.
    Scenario {
        script: PathBuf,
        /// Write the session journal here.
        #[arg(short = 'o', long)]
        journal: Option<PathBuf>,
    },
    /// Fit a sensor-to-table homography from `sx sy tx ty` lines.
    Calibrate { pairs: PathBuf },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let settings = || Settings::load(cli.config.as_deref(), cli.rate_table.as_deref(), cli.params.as_deref());
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Serve {
            listen,
            ui_dir,
            journal_dir,
        } => {
            commands::serve(
                settings()?,
                ServeOptions {
                    listen,
                    ui_dir,
                    journal_dir,
                },
            )?;
            Ok(true)
        }
        Command::Replay { journal, json } => commands::replay(&journal, json, &mut out).map(|_| true),
        Command::Verify { journal, json } => commands::verify(&journal, json, &mut out),
        Command::Scenario { script, journal } => commands::scenario(settings()?, &script, journal.as_deref(), &mut out),
        Command::Calibrate { pairs } => commands::calibrate(&pairs, &mut out).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
