//! Perforation-area surrogate for a steel sphere striking a steel plate.
//!
//! Inputs are plate thickness `h` (mm), obliquity `theta` (rad from the
//! plate normal) and impact speed `v` (km/s). The response is the
//! perforation area in mm², exactly zero at or below the ballistic limit.

use std::f64::consts::FRAC_PI_6;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Millimetres per mil (one thousandth of an inch).
pub const MM_PER_MIL: f64 = 0.0254;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("thickness must be positive, got {0} mm")]
    NonPositiveThickness(f64),
    #[error("obliquity must lie in [0, pi/2), got {0} rad")]
    ObliquityOutOfDomain(f64),
    #[error("impact speed must be nonnegative, got {0} km/s")]
    NegativeSpeed(f64),
    #[error("surrogate parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Fitted constants of the surrogate. Defaults are the published fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    /// Ballistic-limit scale, km/s.
    pub h0: f64,
    pub s: f64,
    pub n: f64,
    /// Area scale, mm².
    pub k: f64,
    pub p: f64,
    pub u: f64,
    /// Exponent on the clamped `tanh` term.
    pub m_exp: f64,
    /// Projectile diameter, mm.
    pub dp: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            h0: 0.5794,
            s: 1.4004,
            n: 0.4482,
            k: 10.3936,
            p: 0.4757,
            u: 1.0275,
            m_exp: 0.4682,
            dp: 1.778,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let named = [
            ("h0", self.h0),
            ("s", self.s),
            ("n", self.n),
            ("k", self.k),
            ("p", self.p),
            ("u", self.u),
            ("m_exp", self.m_exp),
            ("dp", self.dp),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(SurrogateError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Axis-aligned input box `(h, theta, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputBox {
    pub h: (f64, f64),
    pub theta: (f64, f64),
    pub v: (f64, f64),
}

impl InputBox {
    /// 60 to 105 mils thickness, 0 to 30 degrees obliquity, 2.1 to 2.8 km/s.
    pub fn reference() -> Self {
        Self {
            h: (1.524, 2.667),
            theta: (0.0, FRAC_PI_6),
            v: (2.1, 2.8),
        }
    }

    pub fn as_bounds(&self) -> Vec<(f64, f64)> {
        vec![self.h, self.theta, self.v]
    }
}

fn check_geometry(h: f64, theta: f64) -> Result<(), SurrogateError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(SurrogateError::NonPositiveThickness(h));
    }
    if !(theta.is_finite() && (0.0..std::f64::consts::FRAC_PI_2).contains(&theta)) {
        return Err(SurrogateError::ObliquityOutOfDomain(theta));
    }
    Ok(())
}

/// Speed (km/s) below which the plate is not perforated.
pub fn ballistic_limit(
    h: f64,
    theta: f64,
    params: &SurrogateParams,
) -> Result<f64, SurrogateError> {
    check_geometry(h, theta)?;
    Ok(ballistic_limit_unchecked(h, theta, params))
}

fn ballistic_limit_unchecked(h: f64, theta: f64, params: &SurrogateParams) -> f64 {
    params.h0 * (h / theta.cos().powf(params.n)).powf(params.s)
}

/// Perforation area in mm².
pub fn perforation_area(
    h: f64,
    theta: f64,
    v: f64,
    params: &SurrogateParams,
) -> Result<f64, SurrogateError> {
    check_geometry(h, theta)?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(SurrogateError::NegativeSpeed(v));
    }
    Ok(perforation_area_unchecked(h, theta, v, params))
}

fn perforation_area_unchecked(h: f64, theta: f64, v: f64, params: &SurrogateParams) -> f64 {
    let v_bl = ballistic_limit_unchecked(h, theta, params);
    // clamp before the fractional power
    let excess = (v / v_bl - 1.0).tanh().max(0.0);
    if excess == 0.0 {
        return 0.0;
    }
    params.k
        * (h / params.dp).powf(params.p)
        * theta.cos().powf(params.u)
        * excess.powf(params.m_exp)
}

/// The surrogate as a closed response `x = [h, theta, v] -> H`.
///
/// Inputs outside the physical domain evaluate to NaN; optimizer bounds keep
/// trials inside it.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerforationSurrogate {
    pub params: SurrogateParams,
}

impl PerforationSurrogate {
    pub fn new(params: SurrogateParams) -> Self {
        Self { params }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match x {
            [h, theta, v] => perforation_area(*h, *theta, *v, &self.params).unwrap_or(f64::NAN),
            _ => f64::NAN,
        }
    }

    pub fn ballistic_limit(&self, h: f64, theta: f64) -> Result<f64, SurrogateError> {
        ballistic_limit(h, theta, &self.params)
    }
}

pub fn mils_to_mm(mils: f64) -> f64 {
    mils * MM_PER_MIL
}

pub fn mm_to_mils(mm: f64) -> f64 {
    mm / MM_PER_MIL
}
