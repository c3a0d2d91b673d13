//! Named response functions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::surrogate::{PerforationSurrogate, SurrogateParams};

/// Registry key of the perforation-area surrogate.
pub const SPHIR_PERFORATION: &str = "sphir-perforation";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown response {0:?}")]
    UnknownResponse(String),
    #[error("response {name} takes {expected} coordinates, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type DetailFn = dyn Fn(&[f64]) -> Vec<(&'static str, f64)> + Send + Sync;

/// A scalar response `ℝⁿ → ℝ` with a fixed arity.
#[derive(Clone)]
pub struct Response {
    name: String,
    arity: usize,
    eval: Arc<EvalFn>,
    details: Option<Arc<DetailFn>>,
}

impl Response {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arity,
            eval: Arc::new(eval),
            details: None,
        }
    }

    /// Attaches auxiliary quantities reported next to the value by `ouq eval`.
    pub fn with_details(
        mut self,
        details: impl Fn(&[f64]) -> Vec<(&'static str, f64)> + Send + Sync + 'static,
    ) -> Self {
        self.details = Some(Arc::new(details));
        self
    }

    pub fn surrogate(params: SurrogateParams) -> Self {
        let model = PerforationSurrogate::new(params);
        Self::new(SPHIR_PERFORATION, 3, move |x| model.evaluate(x)).with_details(move |x| {
            let v_bl = model.ballistic_limit(x[0], x[1]).unwrap_or(f64::NAN);
            vec![("ballistic_limit", v_bl)]
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    #[inline]
    pub fn call(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Arity-checked evaluation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, RegistryError> {
        self.check_arity(x.len())?;
        Ok(self.call(x))
    }

    pub fn details(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        match &self.details {
            Some(d) if x.len() == self.arity => d(x),
            _ => Vec::new(),
        }
    }

    pub fn check_arity(&self, found: usize) -> Result<(), RegistryError> {
        if found == self.arity {
            Ok(())
        } else {
            Err(RegistryError::ArityMismatch {
                name: self.name.clone(),
                expected: self.arity,
                found,
            })
        }
    }
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Response")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Response>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the built-in responses with the given surrogate fit.
    pub fn with_surrogate(params: SurrogateParams) -> Self {
        let mut r = Self::empty();
        r.register(Response::surrogate(params));
        r
    }

    pub fn register(&mut self, response: Response) {
        self.entries.insert(response.name.clone(), response);
    }

    pub fn get(&self, name: &str) -> Result<&Response, RegistryError> {
        self.entries
            .get(name)
            .ok_or_else(|| RegistryError::UnknownResponse(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
