use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phidiv::{FitOptions, QuadratureConfig};
use simlab::figures::{emit_figure_data, FigureKind};
use simlab::runner::{quad_tol_from_env, run_experiment, RunOptions};
use simlab::ExperimentConfig;

#[derive(Parser)]
#[command(name = "simlab", version, about = "Monte Carlo studies and figure data for phidiv estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study; writes runs.csv and summary.csv into the output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of runs (overrides the config).
        #[arg(long)]
        runs: Option<usize>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write figure data as CSV.
    Figure {
        #[arg(long)]
        kind: FigureKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simlab: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> simlab::Result<()> {
    let quad_tol = quad_tol_from_env()?;
    match cli.command {
        Command::Run { config, out, seed, runs, jobs } => {
            let exp = ExperimentConfig::load(&config)?.resolve()?;
            let summary = run_experiment(&exp, &RunOptions { seed, runs, jobs, quad_tol })?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("runs.csv"), summary.runs_csv())?;
            let table = summary.summary_csv();
            fs::write(out.join("summary.csv"), &table)?;
            print!("{table}");
        }
        Command::Figure { kind, out } => {
            let mut opts = FitOptions::default();
            if let Some(t) = quad_tol {
                opts.quad = QuadratureConfig::default().with_abs_tol(t);
            }
            let data = emit_figure_data(kind, &opts)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, data.to_csv())?;
        }
    }
    Ok(())
}
