use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pie_cli::problem::base_dir;
use pie_cli::{parse_problem, run_command, CliError, Command, Outcome, Overrides, EXIT_ERROR};

/// Solve partial integral equations f − ϰSf = g₀ fiber by fiber.
#[derive(Debug, Parser)]
#[command(name = "pie", version)]
struct Args {
    command: Command,
    /// JSON problem file.
    #[arg(long)]
    problem: PathBuf,
    /// Directory for CSV profiles (created if missing).
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Override the number of fiber nodes per axis.
    #[arg(long)]
    fibers: Option<usize>,
    /// Override the relative singular-value threshold for fiber solves.
    #[arg(long)]
    tol_solve: Option<f64>,
    /// Override the positive-measure fraction.
    #[arg(long)]
    tau: Option<f64>,
    /// Worker threads for per-fiber work (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn run(args: &Args) -> Result<Outcome, CliError> {
    let overrides = Overrides {
        fibers: args.fibers,
        tol_solve: args.tol_solve,
        tau: args.tau,
    };
    let file = parse_problem(&args.problem, &overrides)?;
    let base = base_dir(&args.problem);
    let outcome = match args.workers {
        Some(0) => return Err(CliError::validation("--workers", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::validation("--workers", e.to_string()))?
            .install(|| run_command(args.command, &file, base))?,
        None => run_command(args.command, &file, base)?,
    };
    if let Some(dir) = &args.csv_out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, text) in &outcome.csv {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(outcome) => {
            println!("{}", outcome.report.to_json());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("pie: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
