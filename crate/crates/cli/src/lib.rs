//! Config-driven front end for `ouq-core`: load a run configuration, execute
//! seeded restarts, and write traces and maximizers to disk.

pub mod artifacts;
pub mod config;

use std::path::{Path, PathBuf};

use ouq_core::{OUQResult, OuqError, OuqRun, Registry, RegistryError};
use rayon::prelude::*;
use thiserror::Error;

use artifacts::{ResultDocument, RunSummary, SummaryDocument};
pub use config::{load_config, ConfigError, RunConfig};

/// Exit status for command-line usage errors, including bad configs.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {run}: {source}")]
    Solver { run: usize, source: OuqError },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(ConfigError::Io { .. }) | RunError::Io { .. } => EXIT_IO,
            RunError::Config(_) | RunError::Registry(_) => EXIT_USAGE,
            RunError::Solver { .. } => EXIT_SOLVER,
        }
    }
}

/// Outcome of one seeded restart.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub result: OUQResult,
}

/// Runs `config.runs` restarts with seeds `seed, seed + 1, …`.
pub fn solve_runs(config: &RunConfig) -> Result<Vec<RunOutcome>, RunError> {
    let problems = (0..config.runs)
        .map(|k| {
            let seed = config.seed.wrapping_add(k as u64);
            config.problem(seed).map(|p| (k, seed, p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    problems
        .into_par_iter()
        .map(|(run, seed, problem)| {
            OuqRun::new(&problem)
                .solve()
                .map(|result| RunOutcome { run, seed, result })
                .map_err(|source| RunError::Solver { run, source })
        })
        .collect()
}

/// Index of the largest bound; ties go to the earliest run.
pub fn best_run(outcomes: &[RunOutcome]) -> Option<&RunOutcome> {
    outcomes.iter().reduce(|best, o| {
        if o.result.probability_bound > best.result.probability_bound {
            o
        } else {
            best
        }
    })
}

fn write(path: PathBuf, contents: &str) -> Result<(), RunError> {
    std::fs::write(&path, contents).map_err(|source| RunError::Io { path, source })
}

/// Writes the trace, result and summary files into `dir`.
pub fn write_artifacts(
    config: &RunConfig,
    outcomes: &[RunOutcome],
    dir: &Path,
) -> Result<SummaryDocument, RunError> {
    std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let layout = config.problem(config.seed)?.layout;
    for o in outcomes {
        write(
            dir.join(format!("trace_{}.csv", o.run)),
            &artifacts::trace_csv(&layout, &o.result.report.trace),
        )?;
        write(
            dir.join(format!("result_{}.json", o.run)),
            &artifacts::to_json(&ResultDocument::new(o.run, o.seed, &o.result)),
        )?;
    }
    let best = best_run(outcomes).expect("at least one run");
    let summary = SummaryDocument {
        best_run: best.run,
        best_bound: best.result.probability_bound,
        runs: outcomes
            .iter()
            .map(|o| RunSummary {
                run: o.run,
                seed: o.seed,
                probability_bound: o.result.probability_bound,
            })
            .collect(),
    };
    write(dir.join("summary.json"), &artifacts::to_json(&summary))?;
    Ok(summary)
}

/// Solves every restart and writes artifacts to `config.output_dir`.
pub fn run_solve(config: &RunConfig) -> Result<SummaryDocument, RunError> {
    let outcomes = solve_runs(config)?;
    write_artifacts(config, &outcomes, &config.output_dir)
}

/// Evaluates a registered response at a point: the value followed by any
/// auxiliary quantities, as `(name, value)` pairs.
pub fn eval_point(
    registry: &Registry,
    name: &str,
    coords: &[f64],
) -> Result<Vec<(&'static str, f64)>, RunError> {
    let response = registry.get(name)?;
    let value = response.evaluate(coords)?;
    let mut out = vec![("value", value)];
    out.extend(response.details(coords));
    Ok(out)
}
