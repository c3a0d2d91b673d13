//! Run configuration, read from a TOML document.
//!
//! ```toml
//! response = "sphir-perforation"
//! npts_per_dim = [2, 2, 2]
//! failure_tolerance = 0.0
//! seed = 0
//! runs = 10
//! output_dir = "out"
//!
//! [[bounds_per_dim]]
//! lower = 1.524
//! upper = 2.667
//! unit = "mm"          # mm | mils | rad | deg | km/s | none
//!
//! [mean_band]           # or { m = 6.5, d = 1.0 }
//! m1 = 5.5
//! m2 = 7.5
//!
//! [outer]
//! npop = 40
//! cross_probability = 0.9
//! scaling_factor = 0.9
//! strategy = "best1exp" # or "best1exp-snippet"
//! max_generations = 1000
//! bounds_mode = "clip"  # or "reject"
//!
//! [inner]               # max_generations caps every inner solve
//! npop = 20
//!
//! [outer_termination]
//! rule = "change-over-generation"
//! tolerance = 1e-4
//! generations = 10
//!
//! [surrogate]           # optional; defaults to the published fit
//! h0 = 0.5794
//! ```

use std::path::{Path, PathBuf};

use ouq_core::{
    BoundsMode, DESettings, MeanConstraint, OUQProblem, ParamLayout, Registry, Strategy,
    SurrogateParams, TerminationRule,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
pub enum Unit {
    #[default]
    #[serde(rename = "none")]
    Unitless,
    #[serde(rename = "mm")]
    Millimetre,
    #[serde(rename = "mils")]
    Mil,
    #[serde(rename = "rad")]
    Radian,
    #[serde(rename = "deg")]
    Degree,
    #[serde(rename = "km/s")]
    KilometrePerSecond,
}

impl Unit {
    /// Converts into the internal unit of the axis (mm, rad, km/s).
    pub fn to_internal(self, value: f64) -> f64 {
        match self {
            Unit::Mil => ouq_core::mils_to_mm(value),
            Unit::Degree => value.to_radians(),
            Unit::Unitless | Unit::Millimetre | Unit::Radian | Unit::KilometrePerSecond => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBounds {
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub unit: Unit,
}

impl AxisBounds {
    pub fn internal(&self) -> (f64, f64) {
        (
            self.unit.to_internal(self.lower),
            self.unit.to_internal(self.upper),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MeanBand {
    Endpoints(BandEndpoints),
    Centered(BandCentered),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandEndpoints {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandCentered {
    pub m: f64,
    pub d: f64,
}

impl MeanBand {
    /// `(m1, m2)` regardless of how the band was written.
    pub fn endpoints(&self) -> (f64, f64) {
        match *self {
            MeanBand::Endpoints(BandEndpoints { m1, m2 }) => (m1, m2),
            MeanBand::Centered(BandCentered { m, d }) => (m - d, m + d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub npop: usize,
    #[serde(default = "default_probability")]
    pub cross_probability: f64,
    #[serde(default = "default_scaling")]
    pub scaling_factor: f64,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_max_generations")]
    pub max_generations: usize,
    #[serde(default)]
    pub bounds_mode: BoundsMode,
}

fn default_probability() -> f64 {
    0.9
}

fn default_scaling() -> f64 {
    0.9
}

fn default_max_generations() -> usize {
    1000
}

impl SolverSection {
    fn settings(&self, seed: u64) -> DESettings {
        DESettings {
            npop: self.npop,
            cross_probability: self.cross_probability,
            scaling_factor: self.scaling_factor,
            strategy: self.strategy,
            seed,
            max_generations: self.max_generations,
            bounds_mode: self.bounds_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TerminationSection {
    ChangeOverGeneration { tolerance: f64, generations: usize },
    ValueBelow { tolerance: f64 },
    MaxGenerations { limit: usize },
}

impl From<TerminationSection> for TerminationRule {
    fn from(t: TerminationSection) -> Self {
        match t {
            TerminationSection::ChangeOverGeneration {
                tolerance,
                generations,
            } => TerminationRule::ChangeOverGeneration {
                tolerance,
                generations,
            },
            TerminationSection::ValueBelow { tolerance } => {
                TerminationRule::ValueBelow { tolerance }
            }
            TerminationSection::MaxGenerations { limit } => {
                TerminationRule::MaxGenerations { limit }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub response: String,
    pub npts_per_dim: Vec<usize>,
    pub bounds_per_dim: Vec<AxisBounds>,
    pub mean_band: MeanBand,
    #[serde(default)]
    pub failure_tolerance: f64,
    pub outer: SolverSection,
    pub inner: SolverSection,
    pub outer_termination: TerminationSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub surrogate: SurrogateParams,
}

fn default_runs() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ouq-output")
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn registry(&self) -> Registry {
        Registry::with_surrogate(self.surrogate)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Validation(msg));
        if self.npts_per_dim.is_empty() {
            return fail("npts_per_dim must name at least one axis".into());
        }
        if let Some(i) = self.npts_per_dim.iter().position(|&n| n == 0) {
            return fail(format!("npts_per_dim[{i}] must be at least 1"));
        }
        if self.npts_per_dim.len() != self.bounds_per_dim.len() {
            return fail(format!(
                "npts_per_dim has {} axes but bounds_per_dim has {}",
                self.npts_per_dim.len(),
                self.bounds_per_dim.len()
            ));
        }
        for (i, b) in self.bounds_per_dim.iter().enumerate() {
            let (lo, hi) = b.internal();
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return fail(format!(
                    "bounds_per_dim[{i}] needs lower < upper, got [{}, {}]",
                    b.lower, b.upper
                ));
            }
        }
        let (m1, m2) = self.mean_band.endpoints();
        if !(m1.is_finite() && m2.is_finite() && m1 < m2) {
            return fail(format!("mean_band needs m1 < m2, got [{m1}, {m2}]"));
        }
        if !(self.failure_tolerance.is_finite() && self.failure_tolerance >= 0.0) {
            return fail(format!(
                "failure_tolerance must be nonnegative, got {}",
                self.failure_tolerance
            ));
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        for (name, section) in [("outer", &self.outer), ("inner", &self.inner)] {
            section
                .settings(0)
                .validate()
                .map_err(|e| ConfigError::Validation(format!("{name}: {e}")))?;
        }
        match self.outer_termination {
            TerminationSection::ChangeOverGeneration {
                tolerance,
                generations,
            } => {
                if !(tolerance.is_finite() && tolerance > 0.0) || generations == 0 {
                    return fail(
                        "change-over-generation needs positive tolerance and generations".into(),
                    );
                }
            }
            TerminationSection::ValueBelow { tolerance } => {
                if !tolerance.is_finite() {
                    return fail("value-below needs a finite tolerance".into());
                }
            }
            TerminationSection::MaxGenerations { limit } => {
                if limit == 0 {
                    return fail("max-generations needs a positive limit".into());
                }
            }
        }
        self.surrogate
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        let registry = self.registry();
        let response = registry
            .get(&self.response)
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        if response.arity() != self.npts_per_dim.len() {
            return fail(format!(
                "response {} takes {} inputs but {} axes are configured",
                self.response,
                response.arity(),
                self.npts_per_dim.len()
            ));
        }
        Ok(())
    }

    /// Problem for the restart seeded with `seed`.
    pub fn problem(&self, seed: u64) -> Result<OUQProblem, ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Validation(e.to_string());
        let response = self
            .registry()
            .get(&self.response)
            .map_err(|e| invalid(&e))?
            .clone();
        let layout = ParamLayout::new(
            self.npts_per_dim.clone(),
            self.bounds_per_dim
                .iter()
                .map(AxisBounds::internal)
                .collect(),
        )
        .map_err(|e| invalid(&e))?;
        let (m1, m2) = self.mean_band.endpoints();
        let constraint = MeanConstraint::from_band(m1, m2).map_err(|e| invalid(&e))?;
        let mut problem = OUQProblem::new(response, layout, constraint).map_err(|e| invalid(&e))?;
        problem.failure_tolerance = self.failure_tolerance;
        problem.outer = self.outer.settings(seed);
        problem.inner = self.inner.settings(0);
        problem.inner_max_generations = self.inner.max_generations;
        problem.outer_termination = self.outer_termination.into();
        Ok(problem)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::parse(&text, path)
}
