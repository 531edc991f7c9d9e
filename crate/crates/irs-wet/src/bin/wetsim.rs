//! Thin command-line front end: `run` executes a scenario file, `plot` turns
//! a results CSV into an SVG line chart. All substance lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irs_wet::plot::{emit_plot, PlotSpec};
use irs_wet::scenario::{run_scenario, RunOverrides};

#[derive(Parser)]
#[command(name = "wetsim", about = "Batch simulator for one-bit-feedback beamforming experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario configuration and write CSV tables.
    Run {
        /// Scenario configuration file.
        config: PathBuf,
        /// Output directory (default: results/).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Apply the scenario's [smoke] overrides for a quick run.
        #[arg(long)]
        smoke: bool,
    },
    /// Render a line chart from a results CSV.
    Plot {
        /// Input CSV file.
        csv: PathBuf,
        /// Column for the horizontal axis.
        #[arg(long)]
        x: String,
        /// Column for the vertical axis.
        #[arg(long)]
        y: String,
        /// Column whose distinct values become separate lines.
        #[arg(long)]
        series: Option<String>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Chart title.
        #[arg(long)]
        title: Option<String>,
        /// Logarithmic horizontal axis.
        #[arg(long)]
        log_x: bool,
        /// Logarithmic vertical axis.
        #[arg(long)]
        log_y: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            smoke,
        } => {
            let overrides = RunOverrides {
                out_dir: out,
                trials,
                seed,
                smoke,
            };
            match run_scenario(&config, &overrides) {
                Ok(report) => {
                    for path in &report.csv_paths {
                        println!("wrote {}", path.display());
                    }
                    if report.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        for (trial, msg) in &report.failures {
                            eprintln!("trial {trial} failed: {msg}");
                        }
                        ExitCode::FAILURE
                    }
                }
                Err(e @ irs_wet::Error::Parse(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Plot {
            csv,
            x,
            y,
            series,
            out,
            title,
            log_x,
            log_y,
        } => {
            let spec = PlotSpec {
                x,
                y,
                series,
                title,
                log_x,
                log_y,
                width: 720,
                height: 480,
            };
            match emit_plot(&csv, &spec, &out) {
                Ok(()) => {
                    println!("wrote {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e @ irs_wet::Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
