//! Optimal upper bounds on failure probabilities.
//!
//! The bound is the maximum of `μ[failure]` over product measures whose
//! factors are finite combinations of Dirac masses, subject to a band on the
//! mean response. See [`solver::ouq_solve`].

pub mod de;
pub mod measure;
pub mod registry;
pub mod solver;
pub mod surrogate;

pub use de::{
    de_solve, derive_seed, mutate_best1exp, termination_met, Bounds, BoundsMode, DESettings,
    DeError, DeSolver, GenerationRecord, SolveReport, Strategy, TerminatedBy, TerminationRule,
    TrialContext,
};
pub use measure::{
    flatten, pack, unflatten, unpack, DiscreteMeasure, MeasureError, ParamLayout, ProductMeasure,
    SupportPoint,
};
pub use registry::{Registry, RegistryError, Response, SPHIR_PERFORATION};
pub use solver::{
    constrain_params, impose_expectation, ouq_cost, ouq_solve, FeasibilityAudit, MeanConstraint,
    OUQProblem, OUQResult, OuqError, OuqRun,
};
pub use surrogate::{
    ballistic_limit, mils_to_mm, mm_to_mils, perforation_area, InputBox, SurrogateParams,
};
