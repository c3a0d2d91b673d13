//! Files written by `ouq solve`.
//!
//! * `trace_<k>.csv`: one row per generation, columns `generation`,
//!   `best_cost`, then the flattened best parameters named `w<i>_<j>` and
//!   `x<i>_<j>` (axis `i`, support point `j`, both 1-based).
//! * `result_<k>.json`: bound, expectation and the maximizing measure.
//! * `summary.json`: per-run bounds and the index of the best run.
//!
//! Floats are written in shortest round-trip form, so files are
//! byte-identical for identical runs.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use ouq_core::{
    DiscreteMeasure, GenerationRecord, MeasureError, OUQResult, ParamLayout, ProductMeasure,
};
use serde::{Deserialize, Serialize};

pub fn trace_header(layout: &ParamLayout) -> String {
    let mut cols = vec!["generation".to_string(), "best_cost".to_string()];
    for (i, &n) in layout.npts_per_dim().iter().enumerate() {
        cols.extend((1..=n).map(|j| format!("w{}_{j}", i + 1)));
        cols.extend((1..=n).map(|j| format!("x{}_{j}", i + 1)));
    }
    cols.join(",")
}

pub fn trace_csv(layout: &ParamLayout, trace: &[GenerationRecord]) -> String {
    let mut out = trace_header(layout);
    out.push('\n');
    for rec in trace {
        let _ = write!(out, "{},{}", rec.generation, rec.best_cost);
        for v in &rec.best_params {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDocument {
    pub weights: Vec<f64>,
    pub positions: Vec<f64>,
    pub bounds: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDocument {
    pub factors: Vec<FactorDocument>,
}

impl MeasureDocument {
    pub fn from_measure(p: &ProductMeasure) -> Self {
        Self {
            factors: p
                .factors()
                .iter()
                .map(|f| FactorDocument {
                    weights: f.weights(),
                    positions: f.coords(),
                    bounds: [f.lower(), f.upper()],
                })
                .collect(),
        }
    }

    pub fn to_measure(&self) -> Result<ProductMeasure, MeasureError> {
        let factors = self
            .factors
            .iter()
            .map(|f| {
                DiscreteMeasure::from_parts(&f.weights, &f.positions, f.bounds[0], f.bounds[1])
            })
            .collect::<Result<Vec<_>, _>>()?;
        ouq_core::pack(factors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub run: usize,
    pub seed: u64,
    pub probability_bound: f64,
    pub expectation: f64,
    pub generations_run: usize,
    pub evaluations: usize,
    pub infeasible_trials: usize,
    pub terminated_by: String,
    pub maximizer: MeasureDocument,
}

impl ResultDocument {
    pub fn new(run: usize, seed: u64, result: &OUQResult) -> Self {
        Self {
            run,
            seed,
            probability_bound: result.probability_bound,
            expectation: result.expectation_at_maximizer,
            generations_run: result.report.generations_run,
            evaluations: result.report.evaluations,
            infeasible_trials: result.report.infeasible_trials,
            terminated_by: result.report.terminated_by.to_string(),
            maximizer: MeasureDocument::from_measure(&result.maximizer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub probability_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryDocument {
    pub best_run: usize,
    pub best_bound: f64,
    pub runs: Vec<RunSummary>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
