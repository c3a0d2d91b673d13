//! Upper bounds on a failure probability over products of discrete measures
//! subject to a mean-of-response constraint.
//!
//! The outer loop maximizes `μ[|H| ≤ tol]` over flattened product measures.
//! Every outer trial first passes through [`constrain_params`], which
//! normalizes the factors and, when `E_μ[H]` falls outside `[m − d, m + d]`,
//! runs an inner differential-evolution solve minimizing `(E_μ[H] − m)²`
//! until it drops to `d²`.

use std::sync::Mutex;

use thiserror::Error;

use crate::de::{
    Bounds, DESettings, DeError, DeSolver, SolveReport, TerminatedBy, TerminationRule, TrialContext,
};
use crate::measure::{
    flatten, unflatten, MeasureError, ParamLayout, ProductMeasure, NORMALIZATION_TOLERANCE,
};
use crate::registry::Response;
use crate::surrogate::{InputBox, SurrogateParams};

/// Slack on the mean band when auditing evaluated trials.
pub const BAND_AUDIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OuqError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Optimizer(#[from] DeError),
    #[error("inner loop did not reach the mean band after {generations} generations")]
    InnerLoopFailed { generations: usize },
    #[error("response takes {found} inputs but the layout has {expected} axes")]
    ArityMismatch { expected: usize, found: usize },
    #[error("invalid mean constraint: {0}")]
    InvalidConstraint(String),
    #[error("outer loop found no feasible measure")]
    NoFeasibleMeasure,
}

pub type Result<T> = std::result::Result<T, OuqError>;

/// `m − d ≤ E_μ[H] ≤ m + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanConstraint {
    m: f64,
    d: f64,
}

impl MeanConstraint {
    pub fn new(m: f64, d: f64) -> Result<Self> {
        if !m.is_finite() || !(d.is_finite() && d > 0.0) {
            return Err(OuqError::InvalidConstraint(format!(
                "need finite m and positive d, got m = {m}, d = {d}"
            )));
        }
        Ok(Self { m, d })
    }

    /// From the band endpoints `[m1, m2]`.
    pub fn from_band(m1: f64, m2: f64) -> Result<Self> {
        if !(m1.is_finite() && m2.is_finite() && m1 < m2) {
            return Err(OuqError::InvalidConstraint(format!(
                "need m1 < m2, got [{m1}, {m2}]"
            )));
        }
        Self::new(0.5 * (m1 + m2), 0.5 * (m2 - m1))
    }

    pub fn target(&self) -> f64 {
        self.m
    }

    pub fn deviation(&self) -> f64 {
        self.d
    }

    pub fn band(&self) -> (f64, f64) {
        (self.m - self.d, self.m + self.d)
    }

    /// Band membership as `(e − m)² ≤ d²`, the same comparison the inner
    /// loop's termination uses, so inner-loop output always passes.
    pub fn contains(&self, expectation: f64) -> bool {
        (expectation - self.m).powi(2) <= self.d * self.d
    }
}

#[derive(Debug, Clone)]
pub struct OUQProblem {
    pub response: Response,
    pub layout: ParamLayout,
    pub constraint: MeanConstraint,
    /// Failure is `|H| ≤ failure_tolerance`.
    pub failure_tolerance: f64,
    pub outer: DESettings,
    pub inner: DESettings,
    pub outer_termination: TerminationRule,
    pub inner_max_generations: usize,
}

impl OUQProblem {
    /// Problem with the reference optimizer configuration: 40/20 members,
    /// `CR = F = 0.9`, change-over-generation `(1e-4, 10)` outside and a
    /// 1000 generation cap inside.
    pub fn new(
        response: Response,
        layout: ParamLayout,
        constraint: MeanConstraint,
    ) -> Result<Self> {
        if response.arity() != layout.dimension() {
            return Err(OuqError::ArityMismatch {
                expected: layout.dimension(),
                found: response.arity(),
            });
        }
        Ok(Self {
            response,
            layout,
            constraint,
            failure_tolerance: 0.0,
            outer: DESettings {
                npop: 40,
                ..DESettings::default()
            },
            inner: DESettings {
                npop: 20,
                ..DESettings::default()
            },
            outer_termination: TerminationRule::ChangeOverGeneration {
                tolerance: 1e-4,
                generations: 10,
            },
            inner_max_generations: 1000,
        })
    }

    /// Perforation surrogate on the reference input box, two support points
    /// per axis and mean area in `[5.5, 7.5]` mm².
    pub fn perforation(params: SurrogateParams) -> Self {
        let layout = ParamLayout::new(vec![2, 2, 2], InputBox::reference().as_bounds())
            .expect("reference layout is valid");
        let constraint = MeanConstraint::from_band(5.5, 7.5).expect("reference band is valid");
        Self::new(Response::surrogate(params), layout, constraint).expect("arity matches")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.outer.seed = seed;
        self
    }

    pub fn with_constraint(mut self, constraint: MeanConstraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.response.arity() != self.layout.dimension() {
            return Err(OuqError::ArityMismatch {
                expected: self.layout.dimension(),
                found: self.response.arity(),
            });
        }
        self.outer.validate()?;
        self.inner.validate()?;
        if self.inner_max_generations == 0 {
            return Err(
                DeError::InvalidSettings("inner_max_generations must be positive".into()).into(),
            );
        }
        if !(self.failure_tolerance.is_finite() && self.failure_tolerance >= 0.0) {
            return Err(DeError::InvalidSettings(format!(
                "failure_tolerance must be nonnegative, got {}",
                self.failure_tolerance
            ))
            .into());
        }
        Ok(())
    }

    pub fn is_failure(&self, x: &[f64]) -> bool {
        self.response.call(x).abs() <= self.failure_tolerance
    }

    pub fn expectation(&self, product: &ProductMeasure) -> Result<f64> {
        Ok(product.expectation(|x| self.response.call(x))?)
    }

    pub fn failure_probability(&self, product: &ProductMeasure) -> Result<f64> {
        Ok(product.event_probability(|x| self.is_failure(x))?)
    }

    fn param_bounds(&self) -> Bounds {
        Bounds::new(self.layout.param_bounds()).expect("layout bounds are validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OUQResult {
    pub probability_bound: f64,
    pub maximizer: ProductMeasure,
    pub expectation_at_maximizer: f64,
    pub report: SolveReport,
}

/// Negative failure probability of the flattened measure.
pub fn ouq_cost(params: &[f64], problem: &OUQProblem) -> Result<f64> {
    let product = unflatten(params, &problem.layout)?;
    Ok(-problem.failure_probability(&product)?)
}

/// Result of a constraint projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainOutcome {
    pub params: Vec<f64>,
    /// Inner-loop generations run, or `None` when the band already held.
    pub inner_generations: Option<usize>,
}

/// Projects a flattened measure onto the admissible set: unit-mass factors
/// with `E[H]` in the mean band.
pub fn constrain_params(params: &[f64], problem: &OUQProblem, seed: u64) -> Result<Vec<f64>> {
    constrain_params_traced(params, problem, seed).map(|o| o.params)
}

pub fn constrain_params_traced(
    params: &[f64],
    problem: &OUQProblem,
    seed: u64,
) -> Result<ConstrainOutcome> {
    let product = unflatten(params, &problem.layout)?.normalized()?;
    let e = problem.expectation(&product)?;
    if problem.constraint.contains(e) {
        return Ok(ConstrainOutcome {
            params: flatten(&product),
            inner_generations: None,
        });
    }

    let (imposed, generations) = impose_expectation_traced(&product, problem, seed)?;
    let mut out = flatten(&imposed);
    problem.param_bounds().clip(&mut out);
    let recheck = unflatten(&out, &problem.layout)?;
    if !recheck.is_normalized() || !problem.constraint.contains(problem.expectation(&recheck)?) {
        return Err(OuqError::InnerLoopFailed { generations });
    }
    Ok(ConstrainOutcome {
        params: out,
        inner_generations: Some(generations),
    })
}

/// Moves `product` into the mean band by minimizing `(E[H] − m)²`.
pub fn impose_expectation(
    product: &ProductMeasure,
    problem: &OUQProblem,
    seed: u64,
) -> Result<ProductMeasure> {
    impose_expectation_traced(product, problem, seed).map(|(p, _)| p)
}

fn impose_expectation_traced(
    product: &ProductMeasure,
    problem: &OUQProblem,
    seed: u64,
) -> Result<(ProductMeasure, usize)> {
    let layout = &problem.layout;
    let m = problem.constraint.target();
    let d = problem.constraint.deviation();
    let settings = DESettings {
        seed,
        max_generations: problem.inner_max_generations,
        ..problem.inner.clone()
    };
    let report = DeSolver::new(
        settings,
        problem.param_bounds(),
        TerminationRule::ValueBelow { tolerance: d * d },
    )
    .parallel(false)
    .with_initial_member(flatten(product))
    .solve(
        |q: &[f64]| {
            unflatten(q, layout)
                .and_then(|p| p.expectation(|x| problem.response.call(x)))
                .map_or(f64::INFINITY, |e| (e - m).powi(2))
        },
        |q: &[f64], _: &TrialContext| -> Result<Vec<f64>> {
            Ok(flatten(&unflatten(q, layout)?.normalized()?))
        },
    )?;
    if report.terminated_by != TerminatedBy::ValueBelow {
        return Err(OuqError::InnerLoopFailed {
            generations: report.generations_run,
        });
    }
    Ok((
        unflatten(&report.opt_params, layout)?,
        report.generations_run,
    ))
}

/// Tallies every outer cost evaluation against the admissible set.
#[derive(Debug, Default)]
pub struct FeasibilityAudit {
    stats: Mutex<AuditStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditStats {
    pub evaluations: usize,
    pub mass_violations: usize,
    pub band_violations: usize,
    pub max_mass_deviation: f64,
    pub min_expectation: f64,
    pub max_expectation: f64,
}

impl Default for AuditStats {
    fn default() -> Self {
        Self {
            evaluations: 0,
            mass_violations: 0,
            band_violations: 0,
            max_mass_deviation: 0.0,
            min_expectation: f64::INFINITY,
            max_expectation: f64::NEG_INFINITY,
        }
    }
}

impl FeasibilityAudit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> AuditStats {
        *self.stats.lock().expect("audit lock")
    }

    fn record(&self, params: &[f64], problem: &OUQProblem) {
        let (lo, hi) = problem.constraint.band();
        let product = unflatten(params, &problem.layout).ok();
        let mass_dev = product
            .as_ref()
            .map(|p| {
                p.factors()
                    .iter()
                    .map(|f| (f.mass() - 1.0).abs())
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        let e = product
            .as_ref()
            .and_then(|p| problem.expectation(p).ok())
            .unwrap_or(f64::NAN);

        let mut s = self.stats.lock().expect("audit lock");
        s.evaluations += 1;
        s.max_mass_deviation = s.max_mass_deviation.max(mass_dev);
        if mass_dev > NORMALIZATION_TOLERANCE {
            s.mass_violations += 1;
        }
        if !(e >= lo - BAND_AUDIT_TOLERANCE && e <= hi + BAND_AUDIT_TOLERANCE) {
            s.band_violations += 1;
        }
        s.min_expectation = s.min_expectation.min(e);
        s.max_expectation = s.max_expectation.max(e);
    }
}

pub fn ouq_solve(problem: &OUQProblem) -> Result<OUQResult> {
    OuqRun::new(problem).solve()
}

/// Configurable outer-loop run: optional audit and per-generation observer.
pub struct OuqRun<'a> {
    problem: &'a OUQProblem,
    audit: Option<&'a FeasibilityAudit>,
    observer: Option<crate::de::Observer<'a>>,
}

impl<'a> OuqRun<'a> {
    pub fn new(problem: &'a OUQProblem) -> Self {
        Self {
            problem,
            audit: None,
            observer: None,
        }
    }

    pub fn with_audit(mut self, audit: &'a FeasibilityAudit) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn with_observer(
        mut self,
        observer: impl FnMut(&crate::de::GenerationRecord) + 'a,
    ) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    pub fn solve(self) -> Result<OUQResult> {
        let problem = self.problem;
        problem.validate()?;
        let audit = self.audit;
        let mut solver = DeSolver::new(
            problem.outer.clone(),
            problem.param_bounds(),
            problem.outer_termination,
        );
        if let Some(obs) = self.observer {
            solver = solver.with_observer(obs);
        }
        let report = solver.solve(
            |q: &[f64]| {
                if let Some(a) = audit {
                    a.record(q, problem);
                }
                ouq_cost(q, problem).unwrap_or(f64::INFINITY)
            },
            |q: &[f64], ctx: &TrialContext| constrain_params(q, problem, ctx.seed),
        )?;
        if !report.feasible {
            return Err(OuqError::NoFeasibleMeasure);
        }
        let maximizer = unflatten(&report.opt_params, &problem.layout)?;
        let expectation_at_maximizer = problem.expectation(&maximizer)?;
        Ok(OUQResult {
            probability_bound: -report.opt_cost,
            maximizer,
            expectation_at_maximizer,
            report,
        })
    }
}
