//! Scalar abstraction shared by the geometric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type accepted by the geometric kernels.
///
/// Implemented for `f32`, `f64` and the forward-mode dual numbers of the
/// `autodiff` crate, which is how exact derivatives of profile maps and chart
/// maps are obtained without hand-written chain rules.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }

    /// Value part as `f64` (the real part for dual numbers).
    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {}

/// Forward-mode dual number with an `f64` value and one `f64` tangent.
pub type Dual = autodiff::FT<f64>;

/// Seeds a dual variable.
#[inline]
pub fn dual_var(x: f64) -> Dual {
    autodiff::F::var(x)
}

/// Lifts a constant into a dual with zero tangent.
#[inline]
pub fn dual_cst(x: f64) -> Dual {
    autodiff::F::cst(x)
}

/// Dual number with value `x` and tangent `dx`.
#[inline]
pub fn dual(x: f64, dx: f64) -> Dual {
    autodiff::F::new(x, dx)
}

/// Tangent part of a dual number.
#[inline]
pub fn dual_deriv(x: Dual) -> f64 {
    x.deriv()
}

/// Relative tolerance that is meaningful in the scalar type: `max(tol, 64 eps)`.
#[inline]
pub fn tol_for<T: Real>(tol: f64) -> T {
    T::of(tol).max(T::epsilon() * T::of(64.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_differentiates_through_generic_code() {
        fn f<T: Real>(x: T) -> T {
            (x * x + T::one()).sqrt()
        }
        let y = f(dual_var(2.0));
        assert!((y.x - 5f64.sqrt()).abs() < 1e-15);
        assert!((dual_deriv(y) - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((f(2.0f32) - 5f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn tolerance_floor_tracks_precision() {
        assert_eq!(tol_for::<f64>(1e-12), 1e-12);
        assert!(tol_for::<f32>(1e-12) > 1e-6);
    }
}
