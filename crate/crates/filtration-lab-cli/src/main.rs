//! Command-line front end: verify scenario files, generate seeded scenarios.
//!
//! Exit codes: 0 when every verdict passes, 1 on any verdict failure, 2 on
//! parse or validation errors.

use clap::{Parser, Subcommand, ValueEnum};
use filtration_lab::generate::{generate, to_canonical_json, GenerateParams};
use filtration_lab::runner::{run_bytes, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "filtration-lab",
    version,
    about = "Verify martingale representation theorems on finite filtered probability spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification tasks of a scenario file.
    Verify {
        /// Scenario file (JSON).
        file: PathBuf,
        /// Restrict to tasks of these kinds (repeatable).
        #[arg(long = "task")]
        tasks: Vec<String>,
        /// Comparison tolerance override (also: FILTRATION_LAB_TOL).
        #[arg(long)]
        tol: Option<f64>,
        /// Seed recorded in the report.
        #[arg(long)]
        seed: Option<u64>,
        /// Report format.
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Generate a seeded random scenario file.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of margins (independent filtrations).
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Moves per margin.
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Children per tree node.
        #[arg(long, default_value_t = 2)]
        branching: usize,
        /// Drift of the actual probabilities away from the martingale point.
        #[arg(long, default_value_t = 0.0)]
        drift_scale: f64,
        /// Emit a default model (market plus default time).
        #[arg(long = "default")]
        default_model: bool,
        /// Stagger moving times (margins round-robin; default after market).
        #[arg(long)]
        staggered: bool,
        /// Output path.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn env_tol() -> Option<f64> {
    std::env::var("FILTRATION_LAB_TOL")
        .ok()
        .and_then(|s| s.parse().ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify {
            file,
            tasks,
            tol,
            seed,
            format,
        } => {
            let bytes = match std::fs::read(&file) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", file.display());
                    return ExitCode::from(2);
                }
            };
            let options = RunOptions {
                tol_override: tol.or_else(env_tol),
                seed,
                task_filter: tasks,
            };
            match run_bytes(&bytes, &options) {
                Ok(report) => {
                    match format {
                        Format::Text => print!("{}", report.render_text()),
                        Format::Structured => print!("{}", report.to_json()),
                    }
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Generate {
            seed,
            d,
            steps,
            branching,
            drift_scale,
            default_model,
            staggered,
            output,
        } => {
            let params = GenerateParams {
                d,
                steps,
                branching,
                drift_scale,
                default_model,
                staggered,
            };
            match generate(seed, &params) {
                Ok(file) => {
                    let text = to_canonical_json(&file);
                    if let Err(e) = std::fs::write(&output, text) {
                        eprintln!("error: cannot write {}: {e}", output.display());
                        return ExitCode::from(2);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
