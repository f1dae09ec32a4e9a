use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hwrel_cli::config;
use hwrel_cli::report;
use hwrel_cli::runner::{self, RunOptions};

#[derive(Parser)]
#[command(name = "hwrel", version, about = "Hardware-fault reliability experiments for neural-network inference")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or an earlier run's manifest.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and HWREL_OUTPUT_ROOT).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Replace the output directory if it exists.
        #[arg(long)]
        force: bool,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Summarize run directories or CSV files into summary.md and SVG charts.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Where to write the report (default: `report/` inside the first input directory).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

const VALIDATION: u8 = 1;
const RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output, force } => {
            let (cfg, base) = match runner::load_input(&config) {
                Ok(x) => x,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(VALIDATION);
                }
            };
            let opts = RunOptions { output, force, verbose: cli.verbose, ..RunOptions::default() };
            match runner::run(&cfg, &base, &opts) {
                Ok(out) => {
                    println!("{}", out.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(if e.is_validation() { VALIDATION } else { RUNTIME })
                }
            }
        }
        Command::Validate { config } => match config::load(&config).and_then(|(c, base)| c.validate(&base)) {
            Ok(()) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(VALIDATION)
            }
        },
        Command::Report { inputs, output } => {
            let out = output.unwrap_or_else(|| {
                let first = &inputs[0];
                let dir = if first.is_dir() { first.clone() } else { first.parent().map(PathBuf::from).unwrap_or_default() };
                dir.join("report")
            });
            match report::report(&inputs, &out) {
                Ok(md) => {
                    print!("{md}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(RUNTIME)
                }
            }
        }
    }
}
