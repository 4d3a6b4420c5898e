use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stokes_mg::bench::{self, RunSpec, SweepConfig, STOPPING_HEADER};
use stokes_mg::mg::ChebyMode;
use stokes_mg::spaces::Discretization;
use stokes_mg::vanka::Weighting;
use stokes_mg::Result;

#[derive(Parser)]
#[command(name = "stokes-mg", version, about = "Multigrid benchmarks for higher-order 2D Stokes discretizations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single configuration.
    Run {
        #[arg(long)]
        case: Discretization,
        #[arg(long)]
        k: usize,
        /// Pre- and post-relaxation sweeps.
        #[arg(long)]
        nu: usize,
        /// Refinements above the 5x5 base mesh.
        #[arg(long)]
        levels: usize,
        #[arg(long, default_value_t = 1e-10)]
        rtol: f64,
        #[arg(long, default_value_t = 100)]
        max_it: usize,
        /// Interior penalty (default 10 k^2).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        viscosity: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "invmult")]
        weighting: Weighting,
        #[arg(long, default_value = "degree")]
        cheby: ChebyMode,
        #[arg(long)]
        out: PathBuf,
        /// Leave the timing columns empty.
        #[arg(long)]
        no_timings: bool,
    },
    /// Run a grid of configurations from a TOML file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_timings: bool,
    },
    /// Find the stopping tolerance needed to reach discretization error.
    Stopping {
        #[arg(long)]
        case: Discretization,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        max_levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { case, k, nu, levels, rtol, max_it, alpha, viscosity, seed, weighting, cheby, out, no_timings } => {
            let spec = RunSpec { case, k, nu, levels, rtol, max_it, alpha, viscosity, seed, weighting, cheby };
            spec.validate()?;
            let mut w = BufWriter::new(File::create(out)?);
            bench::sweep(&[spec], &mut w, !no_timings)?;
            w.flush()?;
        }
        Command::Sweep { config, out, no_timings } => {
            let specs = SweepConfig::from_toml(&std::fs::read_to_string(config)?)?.specs()?;
            let mut w = BufWriter::new(File::create(out)?);
            bench::sweep(&specs, &mut w, !no_timings)?;
            w.flush()?;
        }
        Command::Stopping { case, k, max_levels, out } => {
            let rows = bench::stopping_study(case, k, max_levels)?;
            let mut w = BufWriter::new(File::create(out)?);
            writeln!(w, "{STOPPING_HEADER}")?;
            for r in &rows {
                writeln!(w, "{}", r.csv_row())?;
            }
            w.flush()?;
            let resolved: Vec<_> = rows.iter().filter_map(|r| r.rtol.map(|t| (1.0 / r.n as f64, t))).collect();
            if resolved.len() >= 2 {
                let (h, t): (Vec<f64>, Vec<f64>) = resolved.into_iter().unzip();
                eprintln!("fitted slope of rtol vs h: {:.2}", bench::loglog_slope(&h, &t));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
