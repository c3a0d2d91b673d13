//! Discrete measures built from weighted Dirac masses, and their products.
//!
//! A [`DiscreteMeasure`] is a finite convex (or, before normalization,
//! merely nonnegative) combination of point masses on one input axis. A
//! [`ProductMeasure`] is the tensor product of one such measure per axis.
//! Weights are stored as given; callers normalize when they need a
//! probability measure.
//!
//! The flat parameter layout used by optimizers is, per factor in order,
//! all weights followed by all positions:
//!
//! ```text
//! [w1_1, .., w1_k, x1_1, .., x1_k, w2_1, .., x2_1, .., ...]
//! ```

use thiserror::Error;

/// Algebraic tolerance for measure identities.
pub const ALGEBRA_TOLERANCE: f64 = 1e-12;

/// How far a factor's mass may drift from one and still count as normalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("measure has zero total mass")]
    ZeroMassMeasure,
    #[error("cannot set range {target} on a measure whose support is a single point")]
    DegenerateRange { target: f64 },
    #[error("a product measure needs at least one factor")]
    EmptyFactorList,
    #[error("a discrete measure needs at least one support point")]
    EmptySupport,
    #[error("parameter vector has length {found}, layout expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("factor {factor} has mass {mass}, expected 1")]
    NonNormalizedFactor { factor: usize, mass: f64 },
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid axis bounds [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("invalid target {0}")]
    InvalidTarget(f64),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// One weighted Dirac mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportPoint {
    pub weight: f64,
    pub position: f64,
}

impl SupportPoint {
    pub fn new(weight: f64, position: f64) -> Result<Self> {
        if !weight.is_finite() {
            return Err(MeasureError::NonFinite(weight));
        }
        if !position.is_finite() {
            return Err(MeasureError::NonFinite(position));
        }
        if weight < 0.0 {
            return Err(MeasureError::NegativeWeight(weight));
        }
        Ok(Self { weight, position })
    }
}

/// A measure on one axis: an ordered list of support points plus the axis
/// bounds `[lower, upper]`.
///
/// Positions produced by [`DiscreteMeasure::set_mean`] or
/// [`DiscreteMeasure::set_range`] may leave the bounds; see
/// [`DiscreteMeasure::in_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<SupportPoint>,
    lower: f64,
    upper: f64,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<SupportPoint>, lower: f64, upper: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(MeasureError::InvalidBounds { lower, upper });
        }
        for p in &points {
            SupportPoint::new(p.weight, p.position)?;
        }
        Ok(Self {
            points,
            lower,
            upper,
        })
    }

    /// Builds a measure from parallel weight and position slices.
    pub fn from_parts(weights: &[f64], positions: &[f64], lower: f64, upper: f64) -> Result<Self> {
        if weights.len() != positions.len() {
            return Err(MeasureError::LengthMismatch {
                expected: weights.len(),
                found: positions.len(),
            });
        }
        let points = weights
            .iter()
            .zip(positions)
            .map(|(&w, &x)| SupportPoint::new(w, x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, lower, upper)
    }

    /// A single unit mass at `position`.
    pub fn dirac(position: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![SupportPoint::new(1.0, position)?], lower, upper)
    }

    pub fn points(&self) -> &[SupportPoint] {
        &self.points
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn npts(&self) -> usize {
        self.points.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.weight).collect()
    }

    pub fn coords(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn mass(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    pub fn in_bounds(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.position >= self.lower && p.position <= self.upper)
    }

    /// Mass-weighted mean `Σ w x / Σ w`.
    pub fn mean(&self) -> Result<f64> {
        let mass = self.positive_mass()?;
        let moment: f64 = self.points.iter().map(|p| p.weight * p.position).sum();
        Ok(moment / mass)
    }

    /// Spread of the support, `max x - min x`. Zero-weight points count.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self.extent();
        hi - lo
    }

    /// Rescales weights to unit mass; positions are untouched.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.positive_mass()?;
        let points = self
            .points
            .iter()
            .map(|p| SupportPoint {
                weight: p.weight / mass,
                position: p.position,
            })
            .collect();
        Ok(Self { points, ..*self })
    }

    /// Translates every position by the same offset so the mean becomes
    /// `target`. The result is not clipped to the axis bounds.
    pub fn set_mean(&self, target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(MeasureError::InvalidTarget(target));
        }
        let offset = target - self.mean()?;
        let points = self
            .points
            .iter()
            .map(|p| SupportPoint {
                weight: p.weight,
                position: p.position + offset,
            })
            .collect();
        Ok(Self { points, ..*self })
    }

    /// Scales positions affinely about the mean so the range becomes
    /// `target`. Mean, weights and mass are preserved.
    pub fn set_range(&self, target: f64) -> Result<Self> {
        if !(target.is_finite() && target >= 0.0) {
            return Err(MeasureError::InvalidTarget(target));
        }
        let mean = self.mean()?;
        let current = self.range();
        if current == target {
            return Ok(self.clone());
        }
        if current == 0.0 {
            return Err(MeasureError::DegenerateRange { target });
        }
        let scale = target / current;
        let points = self
            .points
            .iter()
            .map(|p| SupportPoint {
                weight: p.weight,
                position: mean + (p.position - mean) * scale,
            })
            .collect();
        Ok(Self { points, ..*self })
    }

    fn positive_mass(&self) -> Result<f64> {
        let mass = self.mass();
        if mass > 0.0 {
            Ok(mass)
        } else {
            Err(MeasureError::ZeroMassMeasure)
        }
    }

    fn extent(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.position), hi.max(p.position))
            })
    }
}

/// Number of support points and bounds for every axis of a product measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    npts_per_dim: Vec<usize>,
    bounds_per_dim: Vec<(f64, f64)>,
}

impl ParamLayout {
    pub fn new(npts_per_dim: Vec<usize>, bounds_per_dim: Vec<(f64, f64)>) -> Result<Self> {
        if npts_per_dim.is_empty() {
            return Err(MeasureError::EmptyFactorList);
        }
        if npts_per_dim.len() != bounds_per_dim.len() {
            return Err(MeasureError::LengthMismatch {
                expected: npts_per_dim.len(),
                found: bounds_per_dim.len(),
            });
        }
        if npts_per_dim.contains(&0) {
            return Err(MeasureError::EmptySupport);
        }
        for &(lower, upper) in &bounds_per_dim {
            if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                return Err(MeasureError::InvalidBounds { lower, upper });
            }
        }
        Ok(Self {
            npts_per_dim,
            bounds_per_dim,
        })
    }

    pub fn npts_per_dim(&self) -> &[usize] {
        &self.npts_per_dim
    }

    pub fn bounds_per_dim(&self) -> &[(f64, f64)] {
        &self.bounds_per_dim
    }

    pub fn dimension(&self) -> usize {
        self.npts_per_dim.len()
    }

    /// Length of the flattened parameter vector, `Σ 2·npts`.
    pub fn param_len(&self) -> usize {
        self.npts_per_dim.iter().map(|n| 2 * n).sum()
    }

    /// Box bounds for the flat parameter vector: `[0, 1]` for each weight and
    /// the axis bounds for each position.
    pub fn param_bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = Vec::with_capacity(self.param_len());
        for (&n, &axis) in self.npts_per_dim.iter().zip(&self.bounds_per_dim) {
            bounds.extend(std::iter::repeat_n((0.0, 1.0), n));
            bounds.extend(std::iter::repeat_n(axis, n));
        }
        bounds
    }

    /// Indices of the weight entries in the flat vector, grouped per factor.
    pub fn weight_slots(&self) -> Vec<std::ops::Range<usize>> {
        let mut offset = 0;
        self.npts_per_dim
            .iter()
            .map(|&n| {
                let r = offset..offset + n;
                offset += 2 * n;
                r
            })
            .collect()
    }
}

/// The tensor product `μ₁ ⊗ … ⊗ μₙ` of one discrete measure per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    factors: Vec<DiscreteMeasure>,
}

impl ProductMeasure {
    pub fn factors(&self) -> &[DiscreteMeasure] {
        &self.factors
    }

    pub fn dimension(&self) -> usize {
        self.factors.len()
    }

    /// Total number of atoms, `∏ npts`.
    pub fn npts(&self) -> usize {
        self.factors.iter().map(DiscreteMeasure::npts).product()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            npts_per_dim: self.factors.iter().map(DiscreteMeasure::npts).collect(),
            bounds_per_dim: self.factors.iter().map(DiscreteMeasure::bounds).collect(),
        }
    }

    /// Product weights of every atom, in lexicographic index order (last
    /// factor varies fastest).
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.npts());
        self.for_each_atom(|w, _| out.push(w));
        out
    }

    /// Position tuples of every atom, in the same order as [`Self::weights`].
    pub fn coords(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.npts());
        self.for_each_atom(|_, x| out.push(x.to_vec()));
        out
    }

    pub fn is_normalized(&self) -> bool {
        self.factors.iter().all(DiscreteMeasure::is_normalized)
    }

    /// Normalizes every factor whose mass is not already within tolerance of 1.
    pub fn normalized(&self) -> Result<Self> {
        let factors = self
            .factors
            .iter()
            .map(|f| {
                if f.is_normalized() {
                    Ok(f.clone())
                } else {
                    f.normalize()
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    /// `Σ (∏ wᵢ) f(x)` over all atoms.
    pub fn expectation<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        self.check_normalized()?;
        let mut total = 0.0;
        self.for_each_atom(|w, x| total += w * f(x));
        Ok(total)
    }

    /// Total product weight of the atoms where `predicate` holds.
    pub fn event_probability<P>(&self, predicate: P) -> Result<f64>
    where
        P: Fn(&[f64]) -> bool,
    {
        self.check_normalized()?;
        let mut total = 0.0;
        self.for_each_atom(|w, x| {
            if predicate(x) {
                total += w;
            }
        });
        Ok(total)
    }

    fn check_normalized(&self) -> Result<()> {
        for (factor, m) in self.factors.iter().enumerate() {
            if !m.is_normalized() {
                return Err(MeasureError::NonNormalizedFactor {
                    factor,
                    mass: m.mass(),
                });
            }
        }
        Ok(())
    }

    /// Odometer over index tuples; the weight product is accumulated left to
    /// right so the summation order is fixed.
    fn for_each_atom<F>(&self, mut visit: F)
    where
        F: FnMut(f64, &[f64]),
    {
        let n = self.factors.len();
        let mut index = vec![0usize; n];
        let mut x = vec![0.0; n];
        loop {
            let mut w = 1.0;
            for (d, m) in self.factors.iter().enumerate() {
                let p = m.points[index[d]];
                w *= p.weight;
                x[d] = p.position;
            }
            visit(w, &x);

            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                index[d] += 1;
                if index[d] < self.factors[d].npts() {
                    break;
                }
                index[d] = 0;
            }
        }
    }
}

/// Forms the product measure of the given factors, in order.
pub fn pack(factors: Vec<DiscreteMeasure>) -> Result<ProductMeasure> {
    if factors.is_empty() {
        return Err(MeasureError::EmptyFactorList);
    }
    Ok(ProductMeasure { factors })
}

/// Splits a product measure into its factors.
pub fn unpack(product: ProductMeasure) -> Vec<DiscreteMeasure> {
    product.factors
}

/// Flat parameter vector: per factor, weights then positions.
pub fn flatten(product: &ProductMeasure) -> Vec<f64> {
    let mut params = Vec::with_capacity(product.layout().param_len());
    for m in &product.factors {
        params.extend(m.points.iter().map(|p| p.weight));
        params.extend(m.points.iter().map(|p| p.position));
    }
    params
}

/// Inverse of [`flatten`]; axis bounds are taken from `layout`.
pub fn unflatten(params: &[f64], layout: &ParamLayout) -> Result<ProductMeasure> {
    if params.len() != layout.param_len() {
        return Err(MeasureError::LengthMismatch {
            expected: layout.param_len(),
            found: params.len(),
        });
    }
    let mut rest = params;
    let mut factors = Vec::with_capacity(layout.dimension());
    for (&n, &(lower, upper)) in layout.npts_per_dim.iter().zip(&layout.bounds_per_dim) {
        let (chunk, tail) = rest.split_at(2 * n);
        let (weights, positions) = chunk.split_at(n);
        factors.push(DiscreteMeasure::from_parts(
            weights, positions, lower, upper,
        )?);
        rest = tail;
    }
    pack(factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measure(w: &[f64], x: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_parts(w, x, -10.0, 10.0).unwrap()
    }

    #[test]
    fn normalize_uniform_rescale() {
        let m = measure(&[2.0, 2.0], &[0.0, 1.0]).normalize().unwrap();
        assert_eq!(m.weights(), vec![0.5, 0.5]);
        assert_eq!(m.coords(), vec![0.0, 1.0]);
    }

    #[test]
    fn normalize_single_point_is_identity() {
        let m = measure(&[1.0], &[3.0]);
        assert_eq!(m.normalize().unwrap(), m);
    }

    #[test]
    fn normalize_keeps_mean() {
        let m = measure(&[0.2, 0.6], &[-1.0, 1.0]);
        let n = m.normalize().unwrap();
        assert!((n.weights()[0] - 0.25).abs() < 1e-15);
        assert!((n.weights()[1] - 0.75).abs() < 1e-15);
        assert!((m.mean().unwrap() - 0.5).abs() < 1e-12);
        assert!((n.mean().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_is_rejected() {
        let m = measure(&[0.0, 0.0], &[0.0, 1.0]);
        assert_eq!(m.normalize(), Err(MeasureError::ZeroMassMeasure));
        assert_eq!(m.set_mean(1.0), Err(MeasureError::ZeroMassMeasure));
        assert_eq!(m.mean(), Err(MeasureError::ZeroMassMeasure));
    }

    #[test]
    fn set_mean_translates() {
        let m = measure(&[0.25, 0.75], &[0.0, 4.0]);
        assert_eq!(m.mean().unwrap(), 3.0);
        let s = m.set_mean(2.0).unwrap();
        assert_eq!(s.coords(), vec![-1.0, 3.0]);
        assert_eq!(s.weights(), m.weights());
        assert_eq!(s.range(), 4.0);

        let t = measure(&[0.5, 0.5], &[1.0, 3.0]).set_mean(5.0).unwrap();
        assert_eq!(t.coords(), vec![4.0, 6.0]);
        assert_eq!(m.set_mean(3.0).unwrap(), m);
    }

    #[test]
    fn set_mean_may_leave_bounds() {
        let m = DiscreteMeasure::from_parts(&[0.5, 0.5], &[0.0, 1.0], 0.0, 1.0).unwrap();
        let s = m.set_mean(0.9).unwrap();
        assert!(!s.in_bounds());
        assert!((s.mean().unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn set_range_scales_about_mean() {
        let m = measure(&[0.5, 0.5], &[0.0, 2.0]).set_range(4.0).unwrap();
        assert_eq!(m.coords(), vec![-1.0, 3.0]);
        assert_eq!(m.mean().unwrap(), 1.0);

        let m = measure(&[0.3, 0.7], &[1.0, 2.5]);
        assert_eq!(m.set_range(m.range()).unwrap(), m);

        let p = measure(&[1.0, 1.0], &[5.0, 5.0]);
        assert_eq!(p.set_range(0.0).unwrap(), p);
        assert_eq!(
            p.set_range(1.0),
            Err(MeasureError::DegenerateRange { target: 1.0 })
        );
    }

    #[test]
    fn pack_requires_factors() {
        assert_eq!(pack(vec![]), Err(MeasureError::EmptyFactorList));
        let a = measure(&[1.0], &[0.0]);
        let b = measure(&[0.5, 0.5], &[1.0, 2.0]);
        let c = measure(&[1.0], &[3.0]);
        let p = pack(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        assert_eq!(p.dimension(), 3);
        assert_eq!(unpack(p), vec![a, b, c]);
    }

    #[test]
    fn flatten_layout() {
        let p = pack(vec![
            measure(&[0.3, 0.7], &[1.0, 2.0]),
            measure(&[1.0], &[5.0]),
        ])
        .unwrap();
        let flat = flatten(&p);
        assert_eq!(flat, vec![0.3, 0.7, 1.0, 2.0, 1.0, 5.0]);
        let layout = ParamLayout::new(vec![2, 1], vec![(-10.0, 10.0); 2]).unwrap();
        assert_eq!(unflatten(&flat, &layout).unwrap(), p);

        let d = pack(vec![measure(&[1.0], &[3.0])]).unwrap();
        assert_eq!(flatten(&d), vec![1.0, 3.0]);
    }

    #[test]
    fn unflatten_length_mismatch() {
        let layout = ParamLayout::new(vec![2, 2, 2], vec![(0.0, 1.0); 3]).unwrap();
        assert_eq!(layout.param_len(), 12);
        assert_eq!(
            unflatten(&[0.5; 11], &layout),
            Err(MeasureError::LengthMismatch {
                expected: 12,
                found: 11
            })
        );
    }

    #[test]
    fn param_bounds_follow_layout() {
        let layout = ParamLayout::new(vec![2, 1], vec![(1.0, 2.0), (3.0, 4.0)]).unwrap();
        assert_eq!(
            layout.param_bounds(),
            vec![
                (0.0, 1.0),
                (0.0, 1.0),
                (1.0, 2.0),
                (1.0, 2.0),
                (0.0, 1.0),
                (3.0, 4.0)
            ]
        );
        assert_eq!(layout.weight_slots(), vec![0..2, 4..5]);
    }

    #[test]
    fn single_atom_expectation() {
        let p = pack(vec![
            measure(&[1.0], &[1.0]),
            measure(&[1.0], &[2.0]),
            measure(&[1.0], &[4.0]),
        ])
        .unwrap();
        let e = p
            .expectation(|x| x[0] * 100.0 + x[1] * 10.0 + x[2])
            .unwrap();
        assert_eq!(e, 124.0);
    }

    #[test]
    fn sum_expectation_is_sum_of_means() {
        let a = measure(&[0.25, 0.75], &[1.0, 2.0]);
        let b = measure(&[0.5, 0.5], &[-1.0, 3.0]);
        let c = measure(&[0.1, 0.9], &[0.0, 10.0]);
        // 8 terms enumerated by hand: sum over atoms of w * (x + y + z)
        let mut by_hand = 0.0;
        for (wa, xa) in [(0.25, 1.0), (0.75, 2.0)] {
            for (wb, xb) in [(0.5, -1.0), (0.5, 3.0)] {
                for (wc, xc) in [(0.1, 0.0), (0.9, 10.0)] {
                    by_hand += wa * wb * wc * (xa + xb + xc);
                }
            }
        }
        let p = pack(vec![a.clone(), b.clone(), c.clone()]).unwrap();
        let e = p.expectation(|x| x.iter().sum()).unwrap();
        let means = a.mean().unwrap() + b.mean().unwrap() + c.mean().unwrap();
        assert!((e - by_hand).abs() < 1e-12);
        assert!((e - means).abs() < 1e-12);
        assert!((means - 11.75).abs() < 1e-12);
    }

    #[test]
    fn event_probability_extremes() {
        let p = pack(vec![
            measure(&[0.3, 0.7], &[0.0, 1.0]),
            measure(&[0.5, 0.5], &[2.0, 3.0]),
        ])
        .unwrap();
        assert!((p.event_probability(|_| true).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(p.event_probability(|_| false).unwrap(), 0.0);
        assert!((p.event_probability(|x| x[0] > 0.5).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn expectation_requires_normalized_factors() {
        let p = pack(vec![
            measure(&[1.0], &[0.0]),
            measure(&[0.5, 0.6], &[0.0, 1.0]),
        ])
        .unwrap();
        match p.expectation(|_| 1.0) {
            Err(MeasureError::NonNormalizedFactor { factor: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            p.event_probability(|_| true),
            Err(MeasureError::NonNormalizedFactor { factor: 1, .. })
        ));
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let p = pack(vec![
            measure(&[0.5, 0.5], &[0.0, 1.0]),
            measure(&[0.25, 0.75], &[10.0, 20.0]),
        ])
        .unwrap();
        assert_eq!(
            p.coords(),
            vec![
                vec![0.0, 10.0],
                vec![0.0, 20.0],
                vec![1.0, 10.0],
                vec![1.0, 20.0]
            ]
        );
        assert_eq!(p.weights(), vec![0.125, 0.375, 0.125, 0.375]);
    }

    #[test]
    fn constructor_validation() {
        assert_eq!(
            SupportPoint::new(-0.1, 0.0),
            Err(MeasureError::NegativeWeight(-0.1))
        );
        assert!(matches!(
            SupportPoint::new(0.1, f64::NAN),
            Err(MeasureError::NonFinite(_))
        ));
        assert_eq!(
            DiscreteMeasure::new(vec![], 0.0, 1.0),
            Err(MeasureError::EmptySupport)
        );
        assert!(matches!(
            DiscreteMeasure::from_parts(&[1.0], &[0.0], 1.0, 1.0),
            Err(MeasureError::InvalidBounds { .. })
        ));
        assert!(ParamLayout::new(vec![0, 2], vec![(0.0, 1.0); 2]).is_err());
    }
}
