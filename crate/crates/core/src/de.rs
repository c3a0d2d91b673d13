//! Differential evolution with the `Best1Exp` strategy.
//!
//! Each generation builds one trial per population slot from the current
//! best member and the scaled difference of two other members, forces it
//! into the bounding box, passes it through a user constraint, evaluates the
//! cost and replaces the slot on strict improvement. Trials for a generation
//! are all built from the same snapshot of the population, so evaluations can
//! run concurrently and still commit in slot order.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeError {
    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("invalid bounds for parameter {index}: [{lower}, {upper}]")]
    InvalidBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("constraint failed for every trial in generation {generation}; last error: {last}")]
    InfeasibleConstrain { generation: usize, last: String },
}

pub type Result<T> = std::result::Result<T, DeError>;

/// Callback invoked once per committed generation.
pub type Observer<'a> = Box<dyn FnMut(&GenerationRecord) + 'a>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Strategy {
    /// Exponential crossover of `best + F·(c1 − c2)` into the target vector.
    #[default]
    #[serde(rename = "best1exp")]
    Best1ExpStandard,
    /// Whole-vector mutation: with probability `CR` return
    /// `best + F·(c1 − c2)`, otherwise `best` unchanged.
    #[serde(rename = "best1exp-snippet")]
    Best1ExpSnippet,
}

/// What happens to a trial that leaves the bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMode {
    /// Clip coordinatewise onto the box.
    #[default]
    Clip,
    /// Discard the trial without evaluating it (infinite cost).
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DESettings {
    pub npop: usize,
    pub cross_probability: f64,
    pub scaling_factor: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub max_generations: usize,
    pub bounds_mode: BoundsMode,
}

impl Default for DESettings {
    fn default() -> Self {
        Self {
            npop: 40,
            cross_probability: 0.9,
            scaling_factor: 0.9,
            strategy: Strategy::Best1ExpStandard,
            seed: 0,
            max_generations: 1000,
            bounds_mode: BoundsMode::Clip,
        }
    }
}

impl DESettings {
    pub fn validate(&self) -> Result<()> {
        if self.npop < 4 {
            return Err(DeError::InvalidSettings(format!(
                "npop must be at least 4, got {}",
                self.npop
            )));
        }
        if !(0.0..=1.0).contains(&self.cross_probability) {
            return Err(DeError::InvalidSettings(format!(
                "cross_probability must lie in [0, 1], got {}",
                self.cross_probability
            )));
        }
        if !(self.scaling_factor.is_finite() && self.scaling_factor > 0.0) {
            return Err(DeError::InvalidSettings(format!(
                "scaling_factor must be positive, got {}",
                self.scaling_factor
            )));
        }
        if self.max_generations == 0 {
            return Err(DeError::InvalidSettings(
                "max_generations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Convergence test evaluated once per generation on the best-cost history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminationRule {
    /// Best cost moved by at most `tolerance` over the last `generations`.
    ChangeOverGeneration { tolerance: f64, generations: usize },
    /// Best cost at or below `tolerance`.
    ValueBelow { tolerance: f64 },
    /// Stop after `limit` generations.
    MaxGenerations { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminatedBy {
    ChangeOverGeneration,
    ValueBelow,
    MaxGenerations,
}

impl fmt::Display for TerminatedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminatedBy::ChangeOverGeneration => "change-over-generation",
            TerminatedBy::ValueBelow => "value-below",
            TerminatedBy::MaxGenerations => "max-generations",
        };
        f.write_str(s)
    }
}

/// Whether `rule` is satisfied by the best-cost history. `MaxGenerations` is
/// enforced by the solver loop and never fires here.
pub fn termination_met(rule: &TerminationRule, history: &[f64]) -> bool {
    let Some(&last) = history.last() else {
        return false;
    };
    match *rule {
        TerminationRule::ChangeOverGeneration {
            tolerance,
            generations,
        } => {
            history.len() > generations
                && (last - history[history.len() - 1 - generations]).abs() <= tolerance
        }
        TerminationRule::ValueBelow { tolerance } => last <= tolerance,
        TerminationRule::MaxGenerations { .. } => false,
    }
}

/// Per-parameter box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for (index, &(lower, upper)) in pairs.iter().enumerate() {
            if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                return Err(DeError::InvalidBounds {
                    index,
                    lower,
                    upper,
                });
            }
        }
        Ok(Self(pairs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len()
            && x.iter()
                .zip(&self.0)
                .all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.0) {
            // NaN goes to the lower bound
            *v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.0
            .iter()
            .map(|&(lo, hi)| lo + rng.gen::<f64>() * (hi - lo))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_cost: f64,
    pub best_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub opt_params: Vec<f64>,
    pub opt_cost: f64,
    /// Number of trace records; generation 0 is the initial population.
    pub generations_run: usize,
    pub evaluations: usize,
    pub trace: Vec<GenerationRecord>,
    pub terminated_by: TerminatedBy,
    /// False only when no member ever passed the constraint.
    pub feasible: bool,
    /// Trials discarded because the constraint failed.
    pub infeasible_trials: usize,
    /// Trials discarded for leaving the box under [`BoundsMode::Reject`].
    pub rejected_trials: usize,
}

/// Identifies a trial for the constraint callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialContext {
    pub generation: usize,
    pub slot: usize,
    /// Child seed derived from the solver seed, generation and slot.
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for nested solvers, independent of the parent's
/// random stream.
pub fn derive_seed(seed: u64, generation: usize, slot: usize) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ generation as u64);
    splitmix64(h ^ (slot as u64).rotate_left(32))
}

/// Builds one `Best1Exp` trial vector.
pub fn mutate_best1exp<R: Rng>(
    best: &[f64],
    c1: &[f64],
    c2: &[f64],
    target: &[f64],
    settings: &DESettings,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = best.len();
    for v in [c1, c2, target] {
        if v.len() != dim {
            return Err(DeError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    if dim == 0 {
        return Err(DeError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    let f = settings.scaling_factor;
    let cr = settings.cross_probability;
    match settings.strategy {
        Strategy::Best1ExpSnippet => {
            if rng.gen::<f64>() >= cr {
                Ok(best.to_vec())
            } else {
                Ok((0..dim).map(|j| best[j] + f * (c1[j] - c2[j])).collect())
            }
        }
        Strategy::Best1ExpStandard => {
            let mut trial = target.to_vec();
            let mut j = rng.gen_range(0..dim);
            let mut mutated = 0;
            loop {
                trial[j] = best[j] + f * (c1[j] - c2[j]);
                mutated += 1;
                j = (j + 1) % dim;
                if mutated >= dim || rng.gen::<f64>() >= cr {
                    break;
                }
            }
            Ok(trial)
        }
    }
}

struct Evaluated<E> {
    params: Vec<f64>,
    outcome: Outcome<E>,
}

enum Outcome<E> {
    Cost(f64),
    Infeasible(E),
    Rejected,
}

/// Differential-evolution minimizer.
pub struct DeSolver<'a> {
    settings: DESettings,
    bounds: Bounds,
    termination: TerminationRule,
    seeded: Vec<Vec<f64>>,
    parallel: bool,
    observer: Option<Observer<'a>>,
}

impl<'a> DeSolver<'a> {
    pub fn new(settings: DESettings, bounds: Bounds, termination: TerminationRule) -> Self {
        Self {
            settings,
            bounds,
            termination,
            seeded: Vec::new(),
            parallel: true,
            observer: None,
        }
    }

    /// Places `member` in the initial population ahead of the random draws.
    pub fn with_initial_member(mut self, member: Vec<f64>) -> Self {
        self.seeded.push(member);
        self
    }

    /// Evaluate the trials of a generation on the rayon pool. Results are
    /// identical either way.
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Called once per generation with the current best.
    pub fn with_observer(mut self, observer: impl FnMut(&GenerationRecord) + 'a) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    /// Runs the solver. `constrain` maps a clipped trial onto the feasible
    /// set; an `Err` discards the trial.
    pub fn solve<F, C, E>(mut self, cost: F, constrain: C) -> Result<SolveReport>
    where
        F: Fn(&[f64]) -> f64 + Sync,
        C: Fn(&[f64], &TrialContext) -> std::result::Result<Vec<f64>, E> + Sync,
        E: fmt::Display + Send,
    {
        self.settings.validate()?;
        let dim = self.bounds.len();
        if dim == 0 {
            return Err(DeError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for m in &self.seeded {
            if m.len() != dim {
                return Err(DeError::DimensionMismatch {
                    expected: dim,
                    found: m.len(),
                });
            }
        }

        let npop = self.settings.npop;
        let seed = self.settings.seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = match self.termination {
            TerminationRule::MaxGenerations { limit } => limit.min(self.settings.max_generations),
            _ => self.settings.max_generations,
        };

        let mut initial = Vec::with_capacity(npop);
        for slot in 0..npop {
            let mut x = match self.seeded.get(slot) {
                Some(m) => m.clone(),
                None => self.bounds.sample(&mut rng),
            };
            self.bounds.clip(&mut x);
            initial.push(x);
        }

        let mut evaluations = 0;
        let mut infeasible_trials = 0;
        let mut rejected_trials = 0;

        let results = evaluate_all(
            &self.settings,
            &self.bounds,
            self.parallel,
            initial,
            0,
            &cost,
            &constrain,
        );
        let mut population = Vec::with_capacity(npop);
        let mut costs = Vec::with_capacity(npop);
        let mut feasible = Vec::with_capacity(npop);
        let mut last_error = None;
        for r in results {
            match r.outcome {
                Outcome::Cost(c) => {
                    evaluations += 1;
                    costs.push(c);
                    feasible.push(true);
                }
                Outcome::Infeasible(e) => {
                    infeasible_trials += 1;
                    last_error = Some(e.to_string());
                    costs.push(f64::INFINITY);
                    feasible.push(false);
                }
                Outcome::Rejected => {
                    rejected_trials += 1;
                    costs.push(f64::INFINITY);
                    feasible.push(false);
                }
            }
            population.push(r.params);
        }
        if !feasible.iter().any(|&f| f) {
            if let Some(last) = last_error {
                return Err(DeError::InfeasibleConstrain {
                    generation: 0,
                    last,
                });
            }
        }

        let mut best = argmin(&costs);
        let mut history = Vec::new();
        let mut trace = Vec::new();
        let mut generation = 0;
        let terminated_by = loop {
            let record = GenerationRecord {
                generation,
                best_cost: costs[best],
                best_params: population[best].clone(),
            };
            history.push(record.best_cost);
            if let Some(obs) = self.observer.as_mut() {
                obs(&record);
            }
            trace.push(record);

            if termination_met(&self.termination, &history) {
                break match self.termination {
                    TerminationRule::ChangeOverGeneration { .. } => {
                        TerminatedBy::ChangeOverGeneration
                    }
                    TerminationRule::ValueBelow { .. } => TerminatedBy::ValueBelow,
                    TerminationRule::MaxGenerations { .. } => TerminatedBy::MaxGenerations,
                };
            }
            if generation >= cap {
                break TerminatedBy::MaxGenerations;
            }
            generation += 1;

            let mut trials = Vec::with_capacity(npop);
            for slot in 0..npop {
                let picks = index::sample(&mut rng, npop - 1, 2);
                let pick = |k: usize| if k >= slot { k + 1 } else { k };
                let (a, b) = (pick(picks.index(0)), pick(picks.index(1)));
                let trial = mutate_best1exp(
                    &population[best],
                    &population[a],
                    &population[b],
                    &population[slot],
                    &self.settings,
                    &mut rng,
                )?;
                trials.push(trial);
            }

            let results = evaluate_all(
                &self.settings,
                &self.bounds,
                self.parallel,
                trials,
                generation,
                &cost,
                &constrain,
            );
            let mut failures = 0;
            let mut last_error = None;
            for (slot, r) in results.into_iter().enumerate() {
                match r.outcome {
                    Outcome::Cost(c) => {
                        evaluations += 1;
                        if c < costs[slot] {
                            costs[slot] = c;
                            population[slot] = r.params;
                            feasible[slot] = true;
                        }
                    }
                    Outcome::Infeasible(e) => {
                        infeasible_trials += 1;
                        failures += 1;
                        last_error = Some(e.to_string());
                    }
                    Outcome::Rejected => rejected_trials += 1,
                }
            }
            if failures == npop {
                return Err(DeError::InfeasibleConstrain {
                    generation,
                    last: last_error.unwrap_or_default(),
                });
            }
            best = argmin(&costs);
        };

        Ok(SolveReport {
            opt_params: population[best].clone(),
            opt_cost: costs[best],
            generations_run: trace.len(),
            evaluations,
            trace,
            terminated_by,
            feasible: feasible[best],
            infeasible_trials,
            rejected_trials,
        })
    }
}

fn evaluate_all<F, C, E>(
    settings: &DESettings,
    bounds: &Bounds,
    parallel: bool,
    trials: Vec<Vec<f64>>,
    generation: usize,
    cost: &F,
    constrain: &C,
) -> Vec<Evaluated<E>>
where
    F: Fn(&[f64]) -> f64 + Sync,
    C: Fn(&[f64], &TrialContext) -> std::result::Result<Vec<f64>, E> + Sync,
    E: Send,
{
    let seed = settings.seed;
    let eval = |(slot, trial): (usize, Vec<f64>)| {
        let ctx = TrialContext {
            generation,
            slot,
            seed: derive_seed(seed, generation, slot),
        };
        evaluate_one(settings, bounds, trial, &ctx, cost, constrain)
    };
    if parallel {
        trials.into_par_iter().enumerate().map(eval).collect()
    } else {
        trials.into_iter().enumerate().map(eval).collect()
    }
}

fn evaluate_one<F, C, E>(
    settings: &DESettings,
    bounds: &Bounds,
    mut trial: Vec<f64>,
    ctx: &TrialContext,
    cost: &F,
    constrain: &C,
) -> Evaluated<E>
where
    F: Fn(&[f64]) -> f64,
    C: Fn(&[f64], &TrialContext) -> std::result::Result<Vec<f64>, E>,
{
    match settings.bounds_mode {
        BoundsMode::Clip => bounds.clip(&mut trial),
        BoundsMode::Reject if !bounds.contains(&trial) => {
            return Evaluated {
                params: trial,
                outcome: Outcome::Rejected,
            };
        }
        BoundsMode::Reject => {}
    }
    let mut params = match constrain(&trial, ctx) {
        Ok(p) if p.len() == trial.len() => p,
        Ok(_) => {
            return Evaluated {
                params: trial,
                outcome: Outcome::Rejected,
            };
        }
        Err(e) => {
            return Evaluated {
                params: trial,
                outcome: Outcome::Infeasible(e),
            };
        }
    };
    match settings.bounds_mode {
        BoundsMode::Clip => bounds.clip(&mut params),
        BoundsMode::Reject if !bounds.contains(&params) => {
            return Evaluated {
                params,
                outcome: Outcome::Rejected,
            };
        }
        BoundsMode::Reject => {}
    }
    let c = cost(&params);
    Evaluated {
        params,
        outcome: Outcome::Cost(if c.is_nan() { f64::INFINITY } else { c }),
    }
}

/// First index of the smallest cost; ties keep the earlier slot.
fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate().skip(1) {
        if c < costs[best] {
            best = i;
        }
    }
    best
}

/// Minimizes `cost` over `bounds` with an infallible constraint projection.
pub fn de_solve<F, C>(
    cost: F,
    bounds: Bounds,
    settings: DESettings,
    constrain: C,
    termination: TerminationRule,
) -> Result<SolveReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
    C: Fn(&[f64]) -> Vec<f64> + Sync,
{
    DeSolver::new(settings, bounds, termination).solve(cost, |x: &[f64], _: &TrialContext| {
        Ok::<_, std::convert::Infallible>(constrain(x))
    })
}
