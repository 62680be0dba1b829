//! Minkowski linear algebra in `R^{n+1}_1`, signature `(+, ..., +, -)` with the
//! temporal component stored last.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default half-width of the lightlike band used by [`causal_class`].
pub const CAUSAL_TOL: f64 = 1e-12;

/// A vector in `R^{n+1}_1` for `n` in `{1, 2}`.
///
/// Unused spatial slots are kept at zero so that arithmetic never needs to
/// branch on the dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpacetimeVector<T> {
    spatial: [T; 2],
    dim: usize,
    temporal: T,
}

/// Causal character of a vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalClass {
    Spacelike,
    Timelike,
    Lightlike,
}

impl<T: Real> SpacetimeVector<T> {
    pub fn new(spatial: &[T], temporal: T) -> Result<Self> {
        match spatial.len() {
            1 => Ok(Self::new1(spatial[0], temporal)),
            2 => Ok(Self::new2(spatial[0], spatial[1], temporal)),
            n => Err(Error::UnsupportedDimension(n)),
        }
    }

    pub fn new1(x: T, t: T) -> Self {
        Self { spatial: [x, T::zero()], dim: 1, temporal: t }
    }

    pub fn new2(x: T, y: T, t: T) -> Self {
        Self { spatial: [x, y], dim: 2, temporal: t }
    }

    pub fn zero(dim: usize) -> Self {
        Self { spatial: [T::zero(); 2], dim, temporal: T::zero() }
    }

    /// Unit future time direction `e_t`.
    pub fn e_t(dim: usize) -> Self {
        Self { spatial: [T::zero(); 2], dim, temporal: T::one() }
    }

    /// Unit spatial basis vector `e_i`.
    pub fn e_spatial(dim: usize, i: usize) -> Self {
        let mut v = Self::zero(dim);
        v.spatial[i] = T::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spatial(&self) -> &[T] {
        &self.spatial[..self.dim]
    }

    pub fn temporal(&self) -> T {
        self.temporal
    }

    /// Component `a` in ambient ordering: spatial first, temporal last.
    pub fn component(&self, a: usize) -> T {
        if a < self.dim {
            self.spatial[a]
        } else {
            self.temporal
        }
    }

    pub fn from_components(dim: usize, c: &[T]) -> Self {
        let mut v = Self::zero(dim);
        for (a, &x) in c.iter().enumerate().take(dim + 1) {
            v.set_component(a, x);
        }
        v
    }

    pub fn set_component(&mut self, a: usize, x: T) {
        if a < self.dim {
            self.spatial[a] = x;
        } else {
            self.temporal = x;
        }
    }

    /// Minkowski inner product; dimensions are assumed equal.
    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        self.spatial[0] * other.spatial[0] + self.spatial[1] * other.spatial[1]
            - self.temporal * other.temporal
    }

    #[inline]
    pub fn square(&self) -> T {
        self.dot(self)
    }

    /// Euclidean norm of the components, used only for reporting defects.
    pub fn euclidean_norm(&self) -> T {
        (self.spatial[0] * self.spatial[0]
            + self.spatial[1] * self.spatial[1]
            + self.temporal * self.temporal)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.spatial.iter().all(|x| x.is_finite()) && self.temporal.is_finite()
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> SpacetimeVector<U> {
        SpacetimeVector { spatial: [f(self.spatial[0]), f(self.spatial[1])], dim: self.dim, temporal: f(self.temporal) }
    }

    pub fn to_f64(&self) -> SpacetimeVector<f64> {
        self.map(|x| x.as_f64())
    }
}

impl<T: Real> Add for SpacetimeVector<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            spatial: [self.spatial[0] + o.spatial[0], self.spatial[1] + o.spatial[1]],
            dim: self.dim,
            temporal: self.temporal + o.temporal,
        }
    }
}

impl<T: Real> Sub for SpacetimeVector<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            spatial: [self.spatial[0] - o.spatial[0], self.spatial[1] - o.spatial[1]],
            dim: self.dim,
            temporal: self.temporal - o.temporal,
        }
    }
}

impl<T: Real> Mul<T> for SpacetimeVector<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self { spatial: [self.spatial[0] * s, self.spatial[1] * s], dim: self.dim, temporal: self.temporal * s }
    }
}

impl<T: Real> Neg for SpacetimeVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self * (-T::one())
    }
}

/// `<a, b> = sum a_i b_i - a_t b_t`.
pub fn minkowski_inner<T: Real>(a: &SpacetimeVector<T>, b: &SpacetimeVector<T>) -> Result<T> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(a.dim, b.dim));
    }
    Ok(a.dot(b))
}

pub fn causal_class<T: Real>(a: &SpacetimeVector<T>, tol: T) -> CausalClass {
    let q = a.square();
    if q > tol {
        CausalClass::Spacelike
    } else if q < -tol {
        CausalClass::Timelike
    } else {
        CausalClass::Lightlike
    }
}

/// Normalizes a timelike vector to Minkowski square `-1`, keeping its time orientation.
pub fn unit_timelike<T: Real>(a: &SpacetimeVector<T>) -> Result<SpacetimeVector<T>> {
    let q = a.square();
    if !(q < -T::of(CAUSAL_TOL)) {
        return Err(Error::NotTimelike(q.as_f64()));
    }
    Ok(*a * (-q).sqrt().recip())
}

/// Normalizes a spacelike vector to Minkowski square `+1`.
pub fn unit_spacelike<T: Real>(a: &SpacetimeVector<T>) -> Option<SpacetimeVector<T>> {
    let q = a.square();
    (q > T::of(CAUSAL_TOL)).then(|| *a * q.sqrt().recip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type V = SpacetimeVector<f64>;

    #[test]
    fn inner_product_examples() {
        let ex = V::new1(1.0, 0.0);
        let et = V::new1(0.0, 1.0);
        assert_eq!(minkowski_inner(&ex, &ex).unwrap(), 1.0);
        assert_eq!(minkowski_inner(&et, &et).unwrap(), -1.0);
        let null = V::new2(3.0, 4.0, 5.0);
        assert_eq!(minkowski_inner(&null, &null).unwrap(), 0.0);
        assert_eq!(minkowski_inner(&ex, &null), Err(Error::DimensionMismatch(1, 2)));
    }

    #[test]
    fn causal_examples() {
        assert_eq!(causal_class(&V::new1(1.0, 0.0), 0.0), CausalClass::Spacelike);
        assert_eq!(causal_class(&V::new1(0.0, 1.0), 0.0), CausalClass::Timelike);
        assert_eq!(causal_class(&V::new1(1.0, 1.0), 1e-12), CausalClass::Lightlike);
    }

    #[test]
    fn unit_timelike_examples() {
        assert_eq!(unit_timelike(&V::new1(0.0, 2.0)).unwrap(), V::new1(0.0, 1.0));
        let u = unit_timelike(&V::new1(3.0, 5.0)).unwrap();
        assert!((u.spatial()[0] - 0.75).abs() < 1e-15 && (u.temporal() - 1.25).abs() < 1e-15);
        assert!(matches!(unit_timelike(&V::new1(1.0, 1.0)), Err(Error::NotTimelike(_))));
        let past = unit_timelike(&V::new1(0.5, -2.0)).unwrap();
        assert!(past.temporal() < 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let a = SpacetimeVector::<f32>::new2(1.0, 2.0, 3.0);
        assert_eq!(a.square(), -4.0);
    }

    fn boost(rapidity: f64, angle: f64) -> V {
        V::new2(rapidity.sinh() * angle.cos(), rapidity.sinh() * angle.sin(), rapidity.cosh())
    }

    proptest! {
        #[test]
        fn bilinear_and_symmetric(a in prop::array::uniform3(-10.0..10.0f64),
                                  b in prop::array::uniform3(-10.0..10.0f64),
                                  c in prop::array::uniform3(-10.0..10.0f64),
                                  s in -5.0..5.0f64) {
            let (a, b, c) = (V::from_components(2, &a), V::from_components(2, &b), V::from_components(2, &c));
            prop_assert!((a.dot(&b) - b.dot(&a)).abs() <= 1e-12);
            let lhs = (a * s + b).dot(&c);
            let rhs = s * a.dot(&c) + b.dot(&c);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn unit_timelike_is_normalized(r in 0.0..2.0f64, a in 0.0..6.3f64, scale in 0.01..100.0f64) {
            let u = unit_timelike(&(boost(r, a) * scale)).unwrap();
            prop_assert!((u.square() + 1.0).abs() <= 1e-14);
            prop_assert!(u.temporal() > 0.0);
        }

        #[test]
        fn reversed_cauchy_schwarz(r1 in 0.0..4.0f64, a1 in 0.0..6.3f64, r2 in 0.0..4.0f64, a2 in 0.0..6.3f64) {
            let (u, w) = (boost(r1, a1), boost(r2, a2));
            prop_assert!(-u.dot(&w) >= 1.0 - 1e-12);
        }
    }
}
