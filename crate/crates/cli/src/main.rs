use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ouq_cli::{eval_point, load_config, run_solve, RunError, EXIT_USAGE};
use ouq_core::{Registry, SurrogateParams};

/// Optimal upper bounds on failure probabilities.
#[derive(Debug, Parser)]
#[command(name = "ouq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the bound problem described by a config file.
    Solve {
        config: PathBuf,
        /// Seed of the first restart.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of independent restarts.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Evaluate a registered response at one point.
    Eval {
        response: String,
        #[arg(allow_negative_numbers = true, required = true)]
        coords: Vec<f64>,
    },
}

fn solve(
    config: PathBuf,
    seed: Option<u64>,
    runs: Option<usize>,
    output_dir: Option<PathBuf>,
) -> Result<(), RunError> {
    let mut config = load_config(&config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(runs) = runs {
        config.runs = runs;
    }
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    config.validate()?;
    let summary = run_solve(&config)?;
    for r in &summary.runs {
        println!(
            "run {} seed {}: bound {:.6}",
            r.run, r.seed, r.probability_bound
        );
    }
    println!(
        "best run {}: bound {:.6}",
        summary.best_run, summary.best_bound
    );
    println!("artifacts in {}", config.output_dir.display());
    Ok(())
}

fn eval(response: &str, coords: &[f64]) -> Result<(), RunError> {
    let registry = Registry::with_surrogate(SurrogateParams::default());
    for (name, value) in eval_point(&registry, response, coords)? {
        println!("{name} = {value:.6}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = match cli.command {
        Command::Solve {
            config,
            seed,
            runs,
            output_dir,
        } => solve(config, seed, runs, output_dir),
        Command::Eval { response, coords } => eval(&response, &coords),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
